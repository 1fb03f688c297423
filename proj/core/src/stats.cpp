#include "l96fdt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace l96fdt {

namespace {

constexpr double kGridTol = 1e-9;

void check_same_grid(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size()) throw GridError(std::string(what) + ": grid size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::fabs(a[i] - b[i]) > kGridTol) {
      throw GridError(std::string(what) + ": grid values differ");
    }
  }
}

int checked_stride(double sample_dt, double lag_ds) {
  if (!(sample_dt > 0.0) || !(lag_ds > 0.0)) {
    throw GridError("lag accumulation: sample_dt and lag_ds must be positive");
  }
  const double ratio = lag_ds / sample_dt;
  const int stride = static_cast<int>(std::llround(ratio));
  if (stride < 1 || std::fabs(ratio - stride) > 1e-6) {
    throw GridError("lag accumulation: sample spacing must divide the lag spacing");
  }
  return stride;
}

Vec lag_grid(double ds, int count) {
  Vec lags(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) lags[static_cast<std::size_t>(k)] = k * ds;
  return lags;
}

}  // namespace

int StatsGrids::lag_count() const {
  return static_cast<int>(std::llround(s_max / lag_ds)) + 1;
}

void StatsGrids::validate() const {
  if (!(pdf_hi > pdf_lo)) throw ValidationError("grids: pdf_hi must exceed pdf_lo");
  if (pdf_bins < 1) throw ValidationError("grids: pdf_bins must be >= 1");
  if (!(lag_ds > 0.0) || !(s_max > 0.0)) {
    throw ValidationError("grids: lag_ds and s_max must be positive");
  }
  const double ratio = s_max / lag_ds;
  if (std::fabs(ratio - std::llround(ratio)) > 1e-6) {
    throw ValidationError("grids: s_max must be a multiple of lag_ds");
  }
}

// ---------------------------------------------------------------------------
// PdfAccumulator

PdfAccumulator::PdfAccumulator(double lo, double hi, int bins)
    : lo_(lo), hi_(hi), counts_(static_cast<std::size_t>(bins), 0) {
  if (bins < 1 || !(hi > lo)) throw ValidationError("pdf: bad grid");
  width_ = (hi - lo) / bins;
}

void PdfAccumulator::add(double sample) {
  if (sample >= lo_ && sample < hi_) {
    auto k = static_cast<std::size_t>((sample - lo_) / width_);
    if (k >= counts_.size()) k = counts_.size() - 1;  // hi-edge rounding guard
    ++counts_[k];
    ++inside_;
  } else {
    ++overflow_;
  }
}

void PdfAccumulator::merge(const PdfAccumulator& other) {
  if (other.counts_.size() != counts_.size() || other.lo_ != lo_ || other.hi_ != hi_) {
    throw GridError("pdf merge: accumulators use different grids");
  }
  for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
  inside_ += other.inside_;
  overflow_ += other.overflow_;
}

PdfCurve PdfAccumulator::finalize() const {
  if (inside_ + overflow_ == 0) throw EmptyStreamError("pdf: no samples");
  if (inside_ == 0) throw EmptyStreamError("pdf: all samples out of range");
  PdfCurve out;
  const int bins = static_cast<int>(counts_.size());
  out.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int k = 0; k <= bins; ++k) {
    out.bin_edges[static_cast<std::size_t>(k)] = lo_ + k * width_;
  }
  out.density.resize(counts_.size());
  const double norm = 1.0 / (static_cast<double>(inside_) * width_);
  for (std::size_t k = 0; k < counts_.size(); ++k) {
    out.density[k] = static_cast<double>(counts_[k]) * norm;
  }
  out.overflow = overflow_;
  return out;
}

// ---------------------------------------------------------------------------
// MomentAccumulator

MomentAccumulator::MomentAccumulator(int dim, bool track_covariance)
    : dim_(dim), track_cov_(track_covariance) {
  if (dim < 1) throw ValidationError("moments: dim must be >= 1");
  sum_ = Eigen::VectorXd::Zero(dim);
  sum_sq_ = Eigen::VectorXd::Zero(dim);
  if (track_cov_) cross_ = Eigen::MatrixXd::Zero(dim, dim);
}

void MomentAccumulator::add(std::span<const double> sample) {
  if (static_cast<int>(sample.size()) != dim_) {
    throw DimensionError("moments: sample length mismatch");
  }
  Eigen::Map<const Eigen::VectorXd> v(sample.data(), dim_);
  sum_ += v;
  sum_sq_.array() += v.array().square();
  if (track_cov_) {
    cross_.selfadjointView<Eigen::Lower>().rankUpdate(v);
  }
  ++count_;
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.dim_ != dim_ || other.track_cov_ != track_cov_) {
    throw DimensionError("moments merge: incompatible accumulators");
  }
  sum_ += other.sum_;
  sum_sq_ += other.sum_sq_;
  if (track_cov_) cross_ += other.cross_;
  count_ += other.count_;
}

Vec MomentAccumulator::mean() const {
  if (count_ == 0) throw EmptyStreamError("moments: no samples");
  Eigen::VectorXd m = sum_ / static_cast<double>(count_);
  return Vec(m.data(), m.data() + dim_);
}

Vec MomentAccumulator::variance_diag() const {
  if (count_ == 0) throw EmptyStreamError("moments: no samples");
  const double n = static_cast<double>(count_);
  Vec out(static_cast<std::size_t>(dim_));
  for (int i = 0; i < dim_; ++i) {
    const double m = sum_[i] / n;
    out[static_cast<std::size_t>(i)] = std::max(0.0, sum_sq_[i] / n - m * m);
  }
  return out;
}

Eigen::MatrixXd MomentAccumulator::covariance() const {
  if (!track_cov_) throw ValidationError("moments: covariance tracking disabled");
  if (count_ == 0) throw EmptyStreamError("moments: no samples");
  const double n = static_cast<double>(count_);
  Eigen::VectorXd m = sum_ / n;
  Eigen::MatrixXd cov =
      Eigen::MatrixXd(cross_.selfadjointView<Eigen::Lower>()) / n - m * m.transpose();
  // exact symmetry of the finalized matrix
  cov = 0.5 * (cov + cov.transpose()).eval();
  return cov;
}

// ---------------------------------------------------------------------------
// LagCorrelationAccumulator

LagCorrelationAccumulator::LagCorrelationAccumulator(double sample_dt, double lag_ds,
                                                     double s_max)
    : ds_(lag_ds), stride_(checked_stride(sample_dt, lag_ds)) {
  const double nk = s_max / lag_ds;
  lag_count_ = static_cast<int>(std::llround(nk)) + 1;
  if (std::fabs(nk - (lag_count_ - 1)) > 1e-6) {
    throw GridError("lag accumulation: s_max must be a multiple of lag_ds");
  }
  ring_cap_ = static_cast<std::size_t>(lag_count_ - 1) * stride_ + 1;
  ring_a_.resize(ring_cap_);
  ring_b_.resize(ring_cap_);
  acc_.assign(static_cast<std::size_t>(lag_count_), 0.0);
}

void LagCorrelationAccumulator::add(double a, double b) {
  if (size_ == ring_cap_) {
    // oldest sample was emitted when the ring filled; drop it
    head_ = (head_ + 1) % ring_cap_;
    --size_;
  }
  const std::size_t pos = (head_ + size_) % ring_cap_;
  ring_a_[pos] = a;
  ring_b_[pos] = b;
  ++size_;
  if (size_ == ring_cap_) emit_oldest();
}

void LagCorrelationAccumulator::emit_oldest() {
  const double a0 = ring_a_[head_];
  for (int k = 0; k < lag_count_; ++k) {
    const std::size_t idx = (head_ + static_cast<std::size_t>(k) * stride_) % ring_cap_;
    acc_[static_cast<std::size_t>(k)] += a0 * ring_b_[idx];
  }
  m2a_ += a0 * a0;
  ++emitted_;
}

double LagCorrelationAccumulator::second_moment_a() const {
  if (emitted_ == 0) throw DegenerateVarianceError("lag: window shorter than s_max");
  return m2a_ / static_cast<double>(emitted_);
}

LagCurve LagCorrelationAccumulator::finalize_raw() const {
  if (emitted_ == 0) throw DegenerateVarianceError("lag: window shorter than s_max");
  LagCurve out;
  out.lags = lag_grid(ds_, lag_count_);
  out.values.resize(acc_.size());
  for (std::size_t k = 0; k < acc_.size(); ++k) {
    out.values[k] = acc_[k] / static_cast<double>(emitted_);
  }
  return out;
}

LagCurve LagCorrelationAccumulator::finalize_normalized() const {
  LagCurve out = finalize_raw();
  const double m2 = second_moment_a();
  if (m2 <= 0.0) throw DegenerateVarianceError("lag: zero second moment");
  for (double& v : out.values) v /= m2;
  return out;
}

// ---------------------------------------------------------------------------

LagCurve energy_autocorrelation_from_raw(const LagCurve& raw_sq, const LagCurve& acf,
                                         double second_moment) {
  check_same_grid(raw_sq.lags, acf.lags, "energy autocorrelation");
  LagCurve out;
  out.lags = raw_sq.lags;
  out.values.resize(raw_sq.values.size());
  const double m2sq = second_moment * second_moment;
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    const double raw_corr = acf.values[k] * second_moment;
    out.values[k] = raw_sq.values[k] / (m2sq + 2.0 * raw_corr * raw_corr);
  }
  return out;
}

LagCurve energy_autocorrelation(std::span<const double> signal, const LagCurve& acf,
                                double sample_dt, double lag_ds, double s_max) {
  LagCorrelationAccumulator sq(sample_dt, lag_ds, s_max);
  LagCorrelationAccumulator plain(sample_dt, lag_ds, s_max);
  for (double v : signal) {
    sq.add(v * v, v * v);
    plain.add(v, v);
  }
  return energy_autocorrelation_from_raw(sq.finalize_raw(), acf,
                                         plain.second_moment_a());
}

// ---------------------------------------------------------------------------
// SlowStatsAccumulator

SlowStatsAccumulator::SlowStatsAccumulator(int n_slow, const StatsGrids& grids,
                                           double sample_dt)
    : n_(n_slow),
      grids_(grids),
      stride_(checked_stride(sample_dt, grids.lag_ds)),
      pdf_(grids.pdf_lo, grids.pdf_hi, grids.pdf_bins) {
  grids_.validate();
  if (n_slow < 2) throw ValidationError("slow stats: need at least 2 slow variables");
  lag_count_ = grids_.lag_count();
  ring_cap_ = static_cast<std::size_t>(lag_count_ - 1) * stride_ + 1;
  ring_.resize(ring_cap_ * static_cast<std::size_t>(n_));
  ring_sq_.resize(ring_cap_ * static_cast<std::size_t>(n_));
  racf_.assign(static_cast<std::size_t>(lag_count_), 0.0);
  rccf_.assign(static_cast<std::size_t>(lag_count_), 0.0);
  rkcf_.assign(static_cast<std::size_t>(lag_count_), 0.0);
}

void SlowStatsAccumulator::add(std::span<const double> x) {
  if (static_cast<int>(x.size()) != n_) {
    throw DimensionError("slow stats: sample length mismatch");
  }
  if (size_ == ring_cap_) {
    // oldest sample was emitted when the ring filled; drop it
    head_ = (head_ + 1) % ring_cap_;
    --size_;
  }
  const std::size_t pos = (head_ + size_) % ring_cap_;
  double* row = ring_.data() + pos * static_cast<std::size_t>(n_);
  double* row_sq = ring_sq_.data() + pos * static_cast<std::size_t>(n_);
  for (int i = 0; i < n_; ++i) {
    row[i] = x[static_cast<std::size_t>(i)];
    row_sq[i] = row[i] * row[i];
  }
  ++size_;
  if (size_ == ring_cap_) emit_oldest();

  for (int i = 0; i < n_; ++i) {
    const double v = x[static_cast<std::size_t>(i)];
    pdf_.add(v);
    sum_all_ += v;
    sum_sq_all_ += v * v;
  }
  ++samples_;
}

void SlowStatsAccumulator::emit_oldest() {
  const std::size_t n = static_cast<std::size_t>(n_);
  const double* x0 = ring_.data() + head_ * n;
  const double* q0 = ring_sq_.data() + head_ * n;
  for (int k = 0; k < lag_count_; ++k) {
    const std::size_t idx = (head_ + static_cast<std::size_t>(k) * stride_) % ring_cap_;
    const double* xs = ring_.data() + idx * n;
    const double* qs = ring_sq_.data() + idx * n;
    double sa = 0.0, sc = 0.0, sk = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sa += x0[i] * xs[i];
      sc += x0[i] * xs[(i + 1) % n];
      sk += q0[i] * qs[i];
    }
    racf_[static_cast<std::size_t>(k)] += sa;
    rccf_[static_cast<std::size_t>(k)] += sc;
    rkcf_[static_cast<std::size_t>(k)] += sk;
  }
  for (std::size_t i = 0; i < n; ++i) m2_window_ += q0[i];
  ++emitted_;
}

StatisticsSummary SlowStatsAccumulator::finalize() const {
  if (emitted_ == 0) {
    throw DegenerateVarianceError("slow stats: window shorter than s_max");
  }
  StatisticsSummary out;
  out.pdf = pdf_.finalize();

  const double denom = static_cast<double>(emitted_) * n_;
  const double m2w = m2_window_ / denom;
  if (m2w <= 0.0) throw DegenerateVarianceError("slow stats: zero second moment");

  out.acf.lags = lag_grid(grids_.lag_ds, lag_count_);
  out.ccf.lags = out.acf.lags;
  out.kcf.lags = out.acf.lags;
  out.acf.values.resize(racf_.size());
  out.ccf.values.resize(rccf_.size());
  out.kcf.values.resize(rkcf_.size());
  const double m2sq = m2w * m2w;
  for (std::size_t k = 0; k < racf_.size(); ++k) {
    const double acf_raw = racf_[k] / denom;
    out.acf.values[k] = acf_raw / m2w;
    out.ccf.values[k] = (rccf_[k] / denom) / m2w;
    out.kcf.values[k] = (rkcf_[k] / denom) / (m2sq + 2.0 * acf_raw * acf_raw);
  }

  const double n_all = static_cast<double>(samples_) * n_;
  out.mean = sum_all_ / n_all;
  out.variance = std::max(0.0, sum_sq_all_ / n_all - out.mean * out.mean);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double l2_weighted(const Vec& a, const Vec& b, double delta) {
  double acc = 0.0;
  const std::size_t n = a.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double dk = a[k] - b[k];
    const double w = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
    acc += w * dk * dk;
  }
  return std::sqrt(acc * delta);
}

}  // namespace

double l2_distance(const LagCurve& a, const LagCurve& b) {
  check_same_grid(a.lags, b.lags, "l2");
  if (a.lags.size() < 2) throw GridError("l2: need at least two grid points");
  return l2_weighted(a.values, b.values, a.lags[1] - a.lags[0]);
}

double l2_distance(const PdfCurve& a, const PdfCurve& b) {
  check_same_grid(a.bin_edges, b.bin_edges, "l2");
  return l2_weighted(a.density, b.density, a.bin_width());
}

int count_density_peaks(const PdfCurve& pdf, int smooth_bins, double rel_floor) {
  if (smooth_bins < 1) throw ValidationError("peaks: smooth_bins must be >= 1");
  const int n = static_cast<int>(pdf.density.size());
  const int r = smooth_bins / 2;
  Vec s(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    double acc = 0.0;
    int cnt = 0;
    for (int j = std::max(0, k - r); j <= std::min(n - 1, k + r); ++j) {
      acc += pdf.density[static_cast<std::size_t>(j)];
      ++cnt;
    }
    s[static_cast<std::size_t>(k)] = acc / cnt;
  }
  double smax = 0.0;
  for (double v : s) smax = std::max(smax, v);
  const double floor_v = rel_floor * smax;

  int peaks = 0;
  int k = 0;
  while (k < n) {
    if (s[static_cast<std::size_t>(k)] < floor_v) {
      ++k;
      continue;
    }
    // plateau [k, j] of equal values
    int j = k;
    while (j + 1 < n && s[static_cast<std::size_t>(j + 1)] == s[static_cast<std::size_t>(k)]) ++j;
    const bool rises_left = (k == 0) || (s[static_cast<std::size_t>(k - 1)] < s[static_cast<std::size_t>(k)]);
    const bool falls_right = (j == n - 1) || (s[static_cast<std::size_t>(j + 1)] < s[static_cast<std::size_t>(k)]);
    if (rises_left && falls_right) ++peaks;
    k = j + 1;
  }
  return peaks;
}

}  // namespace l96fdt

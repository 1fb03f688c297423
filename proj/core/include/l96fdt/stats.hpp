#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "l96fdt/errors.hpp"

namespace l96fdt {

using Vec = std::vector<double>;

/// Histogram-based probability density on a fixed uniform grid.
/// density integrates to one over the in-range samples; samples outside
/// [lo, hi) are tallied in `overflow` and excluded from the density.
struct PdfCurve {
  Vec bin_edges;  ///< size bins+1
  Vec density;    ///< size bins
  std::uint64_t overflow = 0;

  double bin_width() const { return bin_edges[1] - bin_edges[0]; }
};

/// Curve on a uniform lag grid starting at s = 0.
struct LagCurve {
  Vec lags;
  Vec values;
};

/// Long-run statistics of a pooled slow-variable signal.
struct StatisticsSummary {
  PdfCurve pdf;
  LagCurve acf;  ///< <x_i(t) x_i(t+s)> / <x_i^2>
  LagCurve ccf;  ///< <x_i(t) x_{i+1}(t+s)> / <x_i^2>
  LagCurve kcf;  ///< energy autocorrelation K(s)
  double mean = 0.0;
  double variance = 0.0;
};

/// Grids shared by all statistics of a run.
struct StatsGrids {
  double pdf_lo = -5.0;
  double pdf_hi = 5.0;
  int pdf_bins = 200;
  double lag_ds = 0.05;
  double s_max = 50.0;

  int lag_count() const;  ///< number of grid points including s = 0
  void validate() const;
};

/// Streaming histogram accumulator on a uniform grid.
class PdfAccumulator {
 public:
  PdfAccumulator(double lo, double hi, int bins);

  void add(double sample);
  void add(std::span<const double> samples) {
    for (double s : samples) add(s);
  }
  void merge(const PdfAccumulator& other);

  std::uint64_t count() const { return inside_ + overflow_; }
  PdfCurve finalize() const;  ///< throws EmptyStreamError on an empty stream

 private:
  double lo_, hi_, width_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t inside_ = 0;
  std::uint64_t overflow_ = 0;
};

/// Running first/second moments of a vector signal, optionally with the
/// full cross-product matrix for covariance estimation. Time-average
/// convention: population normalization (divide by the sample count).
class MomentAccumulator {
 public:
  explicit MomentAccumulator(int dim, bool track_covariance = false);

  void add(std::span<const double> sample);
  void merge(const MomentAccumulator& other);

  std::uint64_t count() const { return count_; }
  Vec mean() const;
  Vec variance_diag() const;
  /// Mean-centered covariance; requires covariance tracking.
  Eigen::MatrixXd covariance() const;

 private:
  int dim_;
  bool track_cov_;
  std::uint64_t count_ = 0;
  Eigen::VectorXd sum_;
  Eigen::VectorXd sum_sq_;
  Eigen::MatrixXd cross_;  // lower triangle accumulated
};

/// Streaming estimator of <a(t) b(t+s)> on the lag grid, normalized by
/// <a^2> at finalize. Raw products, no mean subtraction. All lags share
/// one t-window (t <= T - s_max), so the s = 0 autocorrelation value is
/// exactly 1 after normalization.
class LagCorrelationAccumulator {
 public:
  LagCorrelationAccumulator(double sample_dt, double lag_ds, double s_max);

  void add(double a, double b);

  std::int64_t pair_count() const { return emitted_; }
  /// Second moment of `a` over the emission window.
  double second_moment_a() const;
  LagCurve finalize_normalized() const;  ///< throws if window shorter than s_max
  LagCurve finalize_raw() const;         ///< un-normalized <a(t) b(t+s)>

 private:
  void emit_oldest();

  double ds_;
  int stride_;      // samples per lag-grid step
  int lag_count_;   // grid points including s=0
  std::size_t ring_cap_;
  std::vector<double> ring_a_, ring_b_;
  std::size_t head_ = 0;  // index of oldest sample
  std::size_t size_ = 0;
  std::int64_t emitted_ = 0;
  std::vector<double> acc_;
  double m2a_ = 0.0;
};

/// Energy autocorrelation K(s) = <x^2(t) x^2(t+s)> / (<x^2>^2 + 2 <x(t)x(t+s)>^2)
/// computed from a batch signal; the unnormalized <x(t)x(t+s)> is
/// reconstructed from the supplied normalized acf and <x^2>.
LagCurve energy_autocorrelation(std::span<const double> signal, const LagCurve& acf,
                                double sample_dt, double lag_ds, double s_max);

/// Same combination step from precomputed pieces (grids must match).
LagCurve energy_autocorrelation_from_raw(const LagCurve& raw_sq, const LagCurve& acf,
                                         double second_moment);

/// Pooled statistics over all slow indices: PDF over every entry, and
/// acf/ccf/kcf estimates averaged over i (ccf pairs (i, i+1 mod nx)).
class SlowStatsAccumulator {
 public:
  SlowStatsAccumulator(int n_slow, const StatsGrids& grids, double sample_dt);

  void add(std::span<const double> x);

  std::int64_t sample_count() const { return samples_; }
  StatisticsSummary finalize() const;

 private:
  void emit_oldest();

  int n_;
  StatsGrids grids_;
  int stride_;
  int lag_count_;
  std::size_t ring_cap_;
  std::vector<double> ring_;     // ring_cap x n samples
  std::vector<double> ring_sq_;  // squares, same layout
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::int64_t samples_ = 0;
  std::int64_t emitted_ = 0;
  PdfAccumulator pdf_;
  double sum_all_ = 0.0, sum_sq_all_ = 0.0;
  double m2_window_ = 0.0;  // pooled <x^2> over the emission window
  std::vector<double> racf_, rccf_, rkcf_;
};

/// L2 distance sqrt(sum (a_k - b_k)^2 * delta) with trapezoid end-weighting.
double l2_distance(const LagCurve& a, const LagCurve& b);
double l2_distance(const PdfCurve& a, const PdfCurve& b);

/// Count local maxima of the density after a centered moving-average
/// smoothing over `smooth_bins` bins. Plateaus count once; bins whose
/// smoothed density falls below rel_floor * max are ignored.
int count_density_peaks(const PdfCurve& pdf, int smooth_bins = 5,
                        double rel_floor = 0.01);

}  // namespace l96fdt

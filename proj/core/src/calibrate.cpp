#include "l96fdt/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace l96fdt {

namespace {

constexpr double kDegenerateStd = 1e-6;
constexpr std::int64_t kTailBlock = 1024;
constexpr std::int64_t kRefreshEvery = 4096;

double rms(const Eigen::MatrixXd& m) {
  return std::sqrt(m.array().square().mean());
}

}  // namespace

RescalePair calibrate_rescaling(double forcing, int n, const IntegrationPlan& plan) {
  if (n < 4) throw DimensionError("calibrate_rescaling: need n >= 4");
  plan.validate();
  UncoupledRhs rhs(forcing);
  MomentAccumulator moments(1);
  Vec state = uniform_random_state(n, plan.seed);
  integrate_observed(rhs, std::move(state), plan, [&](double, const Vec& v) {
    for (double u : v) {
      const double s[1] = {u};
      moments.add(s);
    }
  });
  const double mean = moments.mean()[0];
  const double var = moments.variance_diag()[0];
  const double stddev = std::sqrt(var);
  if (stddev < kDegenerateStd) {
    std::ostringstream msg;
    msg << "calibrate_rescaling: degenerate variance (std = " << stddev
        << ") at forcing " << forcing;
    throw DegenerateVarianceError(msg.str());
  }
  return {mean, stddev};
}

// ---------------------------------------------------------------------------
// ReferenceAccumulator

ReferenceAccumulator::ReferenceAccumulator(const ModelParams& p)
    : p_(p), fast_moments_(p.ny(), true), field_moments_(2 * p.ny(), false) {
  p_.validate();
}

void ReferenceAccumulator::add(std::span<const double> x, std::span<const double> y) {
  if (static_cast<int>(x.size()) != p_.nx || static_cast<int>(y.size()) != p_.ny()) {
    throw DimensionError("reference: sample length mismatch");
  }
  fast_moments_.add(y);
  // coupling fields in the fast-time convention, stacked [h | Hdiag]
  thread_local Vec stacked;
  stacked.resize(2 * static_cast<std::size_t>(p_.ny()));
  const double k = p_.lambda_x;
  const std::size_t jf = static_cast<std::size_t>(p_.j_fast);
  const std::size_t ny = static_cast<std::size_t>(p_.ny());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double hv = k * (p_.a * xi + p_.b * xi * xi);
    const double Hv = k * (p_.c * xi + p_.d * xi * xi);
    for (std::size_t j = 0; j < jf; ++j) {
      stacked[i * jf + j] = hv;
      stacked[ny + i * jf + j] = Hv;
    }
  }
  field_moments_.add(stacked);
}

void ReferenceAccumulator::merge(const ReferenceAccumulator& other) {
  fast_moments_.merge(other.fast_moments_);
  field_moments_.merge(other.field_moments_);
}

ReferenceStats ReferenceAccumulator::finalize() const {
  if (fast_moments_.count() == 0) {
    throw EmptyStreamError("reference: no samples");
  }
  ReferenceStats out;
  out.zbar = fast_moments_.mean();
  out.sigma = fast_moments_.covariance();
  const Vec fm = field_moments_.mean();
  const std::size_t ny = static_cast<std::size_t>(p_.ny());
  out.h_star.assign(fm.begin(), fm.begin() + static_cast<std::ptrdiff_t>(ny));
  out.Hdiag_star.assign(fm.begin() + static_cast<std::ptrdiff_t>(ny), fm.end());
  out.samples = fast_moments_.count();
  return out;
}

// ---------------------------------------------------------------------------

RegularizedInverse regularized_inverse(const Eigen::MatrixXd& sigma, double rel_floor) {
  if (sigma.rows() != sigma.cols()) throw DimensionError("inverse: matrix not square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  if (es.info() != Eigen::Success) throw ValidationError("inverse: eigensolver failed");
  RegularizedInverse out;
  Eigen::VectorXd lam = es.eigenvalues();
  out.lambda_max = lam.maxCoeff();
  out.lambda_min = lam.minCoeff();
  if (!(out.lambda_max > 0.0)) {
    throw ValidationError("inverse: matrix has no positive eigenvalues");
  }
  const double floor_v = rel_floor * out.lambda_max;
  Eigen::VectorXd inv_lam(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    double l = lam[i];
    if (l < floor_v) {
      l = floor_v;
      ++out.floored;
    }
    inv_lam[i] = 1.0 / l;
  }
  out.inverse = es.eigenvectors() * inv_lam.asDiagonal() * es.eigenvectors().transpose();
  out.inverse = 0.5 * (out.inverse + out.inverse.transpose()).eval();
  return out;
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  if (es.info() != Eigen::Success) throw ValidationError("sqrt: eigensolver failed");
  Eigen::VectorXd lam = es.eigenvalues();
  if (lam.minCoeff() <= 0.0) {
    throw ValidationError("sqrt: matrix is not positive definite");
  }
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// ResponseOperatorAccumulator

ResponseOperatorAccumulator::ResponseOperatorAccumulator(
    Vec zbar_ref, const Eigen::MatrixXd& sigma_inv, Vec sigma_diag_ref,
    double sample_dt, double lag_ds, double s_max)
    : dim_(static_cast<int>(zbar_ref.size())),
      zbar_(std::move(zbar_ref)),
      sigma_inv_(sigma_inv),
      ds_(lag_ds),
      s_max_(s_max) {
  if (sigma_inv_.rows() != dim_ || sigma_inv_.cols() != dim_ ||
      static_cast<int>(sigma_diag_ref.size()) != dim_) {
    throw DimensionError("response accumulator: dimension mismatch");
  }
  if (std::fabs(sample_dt - lag_ds) > 1e-9 * std::max(sample_dt, lag_ds)) {
    throw GridError("response accumulator: feed must be sampled at lag_ds");
  }
  const double nk = s_max / lag_ds;
  lag_count_ = static_cast<int>(std::llround(nk)) + 1;
  if (std::fabs(nk - (lag_count_ - 1)) > 1e-6) {
    throw GridError("response accumulator: s_max must be a multiple of lag_ds");
  }
  sigma_diag_ = Eigen::Map<const Eigen::VectorXd>(sigma_diag_ref.data(), dim_);
  ring_cap_ = static_cast<std::size_t>(lag_count_);
  ring_.setZero(dim_, static_cast<Eigen::Index>(ring_cap_));
  ring_sq_.setZero(dim_, static_cast<Eigen::Index>(ring_cap_));
  win_sum_.setZero(dim_);
  win_sum_sq_.setZero(dim_);
  acc_a_.setZero(dim_, dim_);
  acc_b_.setZero(dim_, dim_);
  acc_c_.setZero(dim_, dim_);
  acc_d_.setZero(dim_, dim_);
  for (auto& pair : tail_) {
    pair[0].setZero(dim_, dim_);
    pair[1].setZero(dim_, dim_);
  }
  scratch_u_.resize(dim_);
  scratch_v_.resize(dim_);
  scratch_w_.resize(dim_);
  scratch_wd_.resize(dim_);
}

void ResponseOperatorAccumulator::add(std::span<const double> z) {
  if (static_cast<int>(z.size()) != dim_) {
    throw DimensionError("response accumulator: sample length mismatch");
  }
  if (size_ == ring_cap_) {
    win_sum_ -= ring_.col(static_cast<Eigen::Index>(head_));
    win_sum_sq_ -= ring_sq_.col(static_cast<Eigen::Index>(head_));
    head_ = (head_ + 1) % ring_cap_;
    --size_;
  }
  const std::size_t pos = (head_ + size_) % ring_cap_;
  auto col = ring_.col(static_cast<Eigen::Index>(pos));
  auto col_sq = ring_sq_.col(static_cast<Eigen::Index>(pos));
  for (int i = 0; i < dim_; ++i) {
    col[i] = z[static_cast<std::size_t>(i)] - zbar_[static_cast<std::size_t>(i)];
    col_sq[i] = col[i] * col[i];
  }
  win_sum_ += col;
  win_sum_sq_ += col_sq;
  ++size_;
  if (size_ == ring_cap_) emit_oldest();
}

void ResponseOperatorAccumulator::emit_oldest() {
  const auto oldest = static_cast<Eigen::Index>(head_);
  const auto newest = static_cast<Eigen::Index>((head_ + ring_cap_ - 1) % ring_cap_);
  scratch_u_ = ds_ * (win_sum_ - 0.5 * ring_.col(oldest) - 0.5 * ring_.col(newest));
  scratch_v_ =
      ds_ * (win_sum_sq_ - 0.5 * ring_sq_.col(oldest) - 0.5 * ring_sq_.col(newest));
  scratch_w_.noalias() = sigma_inv_ * ring_.col(oldest);
  scratch_wd_ = scratch_w_.cwiseProduct(ring_.col(oldest));

  acc_a_.noalias() += scratch_u_ * scratch_w_.transpose();
  acc_b_.noalias() += scratch_u_ * scratch_wd_.transpose();
  acc_c_.noalias() += scratch_v_ * scratch_w_.transpose();
  acc_d_.noalias() += scratch_v_ * scratch_wd_.transpose();

  const int blk = static_cast<int>((emitted_ / kTailBlock) % 2);
  tail_[0][blk].noalias() += ring_.col(newest) * scratch_w_.transpose();
  tail_[1][blk].noalias() += ring_.col(newest) * scratch_wd_.transpose();
  tail_[2][blk].noalias() += ring_sq_.col(newest) * scratch_w_.transpose();
  tail_[3][blk].noalias() += ring_sq_.col(newest) * scratch_wd_.transpose();
  ++tail_n_[blk];

  ++emitted_;
  if (emitted_ % kRefreshEvery == 0) refresh_sums();
}

void ResponseOperatorAccumulator::refresh_sums() {
  win_sum_ = ring_.rowwise().sum();
  win_sum_sq_ = ring_sq_.rowwise().sum();
}

ResponseOperators ResponseOperatorAccumulator::finalize() const {
  if (emitted_ == 0) {
    throw DegenerateVarianceError("response accumulator: feed shorter than s_max");
  }
  const double inv_n = 1.0 / static_cast<double>(emitted_);
  ResponseOperators out;
  out.mean_from_additive = acc_a_ * inv_n;
  out.mean_from_multiplicative = acc_b_ * inv_n;
  out.var_from_additive = acc_c_ * inv_n;
  out.var_from_multiplicative = acc_d_ * inv_n;
  out.var_from_multiplicative.array().colwise() -= sigma_diag_.array() * s_max_;

  if (tail_n_[0] > 0 && tail_n_[1] > 0) {
    const char* names[4] = {"mean<-additive", "mean<-multiplicative",
                            "var<-additive", "var<-multiplicative"};
    for (int q = 0; q < 4; ++q) {
      Eigen::MatrixXd h0 = tail_[q][0] / static_cast<double>(tail_n_[0]);
      Eigen::MatrixXd h1 = tail_[q][1] / static_cast<double>(tail_n_[1]);
      Eigen::MatrixXd mean_tail = 0.5 * (h0 + h1);
      if (q == 3) {
        // the integrand of the fourth operator subtracts sigma_ii
        mean_tail.array().colwise() -= sigma_diag_.array();
      }
      const double noise = 0.5 * rms(h0 - h1);
      const double tail = rms(mean_tail);
      if (tail > 5.0 * std::max(noise, 1e-14)) {
        std::ostringstream msg;
        msg << "correlation for operator " << names[q]
            << " not decayed at s_max (rms tail " << tail << ", noise floor "
            << noise << ")";
        out.warnings.push_back(msg.str());
      }
    }
  }
  return out;
}

ResponseOperators compute_response_operators(const ModelParams& p,
                                             const CouplingFields& fields,
                                             const IntegrationPlan& plan,
                                             const Vec& zbar_ref,
                                             const Eigen::MatrixXd& sigma_inv,
                                             const Vec& sigma_diag_ref,
                                             double lag_ds, double s_max) {
  plan.validate();
  ResponseOperatorAccumulator acc(zbar_ref, sigma_inv, sigma_diag_ref,
                                  plan.dt * plan.sample_stride, lag_ds, s_max);
  FastLimitingRhs rhs(p, fields);
  Vec z0 = uniform_random_state(p.ny(), plan.seed);
  integrate_observed(rhs, std::move(z0), plan,
                     [&](double, const Vec& z) { acc.add(z); });
  return acc.finalize();
}

// ---------------------------------------------------------------------------

Vec CalibrationData::sigma_star_diag() const {
  Vec out(static_cast<std::size_t>(sigma_star.rows()));
  for (Eigen::Index i = 0; i < sigma_star.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = sigma_star(i, i);
  }
  return out;
}

FastStatsPrediction predict_fast_stats(const Vec& x, const CalibrationData& cal,
                                       const ModelParams& p) {
  const int ny = p.ny();
  if (static_cast<int>(cal.zbar_star.size()) != ny) {
    throw DimensionError("predict: calibration dimension mismatch");
  }
  const CouplingFields f = coupling_fields(x, p, CouplingScale::FastTime);
  Eigen::VectorXd dh(ny), dH(ny), pvec(ny);
  for (int m = 0; m < ny; ++m) {
    const auto mu = static_cast<std::size_t>(m);
    dh[m] = f.h[mu] - cal.h_star[mu];
    dH[m] = f.Hdiag[mu] - cal.Hdiag_star[mu];
    pvec[m] = dh[m] + dH[m] * cal.zbar_star[mu];
  }
  Eigen::VectorXd zb = Eigen::Map<const Eigen::VectorXd>(cal.zbar_star.data(), ny);
  zb.noalias() += cal.ops.mean_from_additive * pvec;
  zb.noalias() += cal.ops.mean_from_multiplicative * dH;
  Eigen::VectorXd sd(ny);
  for (int m = 0; m < ny; ++m) sd[m] = cal.sigma_star(m, m);
  sd.noalias() += cal.ops.var_from_additive * pvec;
  sd.noalias() += cal.ops.var_from_multiplicative * dH;

  FastStatsPrediction out;
  out.zbar.assign(zb.data(), zb.data() + ny);
  out.sigma_diag.assign(sd.data(), sd.data() + ny);
  return out;
}

void symmetrize_over_blocks(Eigen::MatrixXd& op, int j_fast) {
  const int n = static_cast<int>(op.rows());
  if (j_fast < 1 || n % j_fast != 0) {
    throw DimensionError("symmetrize: dimension not a multiple of j_fast");
  }
  const int blocks = n / j_fast;
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(n, n);
  for (int r = 0; r < blocks; ++r) {
    const int s = r * j_fast;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        avg(i, k) += op((i + s) % n, (k + s) % n);
      }
    }
  }
  op = avg / static_cast<double>(blocks);
}

// ---------------------------------------------------------------------------
// Whitened-coordinate equivalence oracle

WhitenedCheckReport whitened_equivalence_check(const std::vector<Vec>& samples,
                                               const Vec& zbar,
                                               const Eigen::MatrixXd& sigma,
                                               double sample_dt, double lag_ds,
                                               double s_max, double max_condition) {
  WhitenedCheckReport report;
  const int d = static_cast<int>(zbar.size());
  if (d > 12) throw DimensionError("whitened check: meant for small dimensions");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  if (es.info() != Eigen::Success) throw ValidationError("whitened check: eigensolver failed");
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  report.condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(lmin > 0.0) || report.condition > max_condition) {
    report.skipped = true;
    return report;
  }
  const Eigen::MatrixXd S = es.eigenvectors() *
                            es.eigenvalues().cwiseSqrt().asDiagonal() *
                            es.eigenvectors().transpose();
  const Eigen::MatrixXd S_inv = es.eigenvectors() *
                                es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                                es.eigenvectors().transpose();
  const Eigen::MatrixXd sigma_inv = S_inv * S_inv;

  // direct path
  Vec sigma_diag(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) sigma_diag[static_cast<std::size_t>(i)] = sigma(i, i);
  ResponseOperatorAccumulator direct(zbar, sigma_inv, sigma_diag, sample_dt, lag_ds,
                                     s_max);
  for (const Vec& z : samples) direct.add(z);
  const ResponseOperators ops = direct.finalize();

  // whitened path, batch
  const int n = static_cast<int>(samples.size());
  const int lag_count = static_cast<int>(std::llround(s_max / lag_ds)) + 1;
  const int L = lag_count - 1;
  const int n_t = n - L;
  if (n_t <= 0) throw DegenerateVarianceError("whitened check: feed shorter than s_max");

  Eigen::MatrixXd Q(d, n);
  for (int t = 0; t < n; ++t) {
    Eigen::VectorXd dz(d);
    for (int i = 0; i < d; ++i) {
      dz[i] = samples[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] -
              zbar[static_cast<std::size_t>(i)];
    }
    Q.col(t) = S_inv * dz;
  }

  // forward trapezoid integrals of q and of q (x) q
  Eigen::MatrixXd Uq = Eigen::MatrixXd::Zero(d, n_t);
  std::vector<Eigen::MatrixXd> Vq(static_cast<std::size_t>(n_t));
  {
    Eigen::VectorXd run = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd run2 = Eigen::MatrixXd::Zero(d, d);
    for (int u = 0; u <= L; ++u) {
      run += Q.col(u);
      run2.noalias() += Q.col(u) * Q.col(u).transpose();
    }
    for (int t = 0; t < n_t; ++t) {
      Uq.col(t) = lag_ds * (run - 0.5 * Q.col(t) - 0.5 * Q.col(t + L));
      Vq[static_cast<std::size_t>(t)] =
          lag_ds * (run2 - 0.5 * Q.col(t) * Q.col(t).transpose() -
                    0.5 * Q.col(t + L) * Q.col(t + L).transpose());
      if (t + 1 < n_t) {
        run += Q.col(t + L + 1) - Q.col(t);
        run2.noalias() += Q.col(t + L + 1) * Q.col(t + L + 1).transpose();
        run2.noalias() -= Q.col(t) * Q.col(t).transpose();
      }
    }
  }

  Eigen::MatrixXd R1 = Eigen::MatrixXd::Zero(d, d);
  std::vector<double> R2(static_cast<std::size_t>(d * d * d), 0.0);
  std::vector<double> R3(static_cast<std::size_t>(d * d * d), 0.0);
  std::vector<double> R4(static_cast<std::size_t>(d * d * d * d), 0.0);
  auto idx3 = [d](int i, int j, int k) { return (i * d + j) * d + k; };
  auto idx4 = [d](int i, int j, int k, int l) { return ((i * d + j) * d + k) * d + l; };
  for (int t = 0; t < n_t; ++t) {
    const auto& V = Vq[static_cast<std::size_t>(t)];
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        R1(i, j) += Uq(i, t) * Q(j, t);
        for (int k = 0; k < d; ++k) {
          R2[static_cast<std::size_t>(idx3(i, j, k))] += Uq(i, t) * Q(j, t) * Q(k, t);
          R3[static_cast<std::size_t>(idx3(i, j, k))] += V(i, j) * Q(k, t);
          for (int l = 0; l < d; ++l) {
            R4[static_cast<std::size_t>(idx4(i, j, k, l))] +=
                V(i, j) * Q(k, t) * Q(l, t);
          }
        }
      }
    }
  }
  const double inv_nt = 1.0 / static_cast<double>(n_t);
  R1 *= inv_nt;
  for (double& v : R2) v *= inv_nt;
  for (double& v : R3) v *= inv_nt;
  for (double& v : R4) v *= inv_nt;
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) {
      R4[static_cast<std::size_t>(idx4(i, i, k, k))] -= s_max;
    }
  }

  // map back to the original coordinates, contracted onto the diagonal
  // perturbation/response slots
  Eigen::MatrixXd A_w = S * R1 * S_inv;
  Eigen::MatrixXd B_w = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd C_w = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd D_w = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int pcol = 0; pcol < d; ++pcol) {
      double bsum = 0.0, csum = 0.0, dsum = 0.0;
      for (int m = 0; m < d; ++m) {
        for (int j = 0; j < d; ++j) {
          for (int k = 0; k < d; ++k) {
            bsum += S(i, m) * R2[static_cast<std::size_t>(idx3(m, j, k))] *
                    S_inv(j, pcol) * S(pcol, k);
            csum += S(i, m) * S(i, j) * R3[static_cast<std::size_t>(idx3(m, j, k))] *
                    S_inv(k, pcol);
            for (int l = 0; l < d; ++l) {
              dsum += S(i, m) * S(i, j) *
                      R4[static_cast<std::size_t>(idx4(m, j, k, l))] *
                      S_inv(k, pcol) * S(pcol, l);
            }
          }
        }
      }
      B_w(i, pcol) = bsum;
      C_w(i, pcol) = csum;
      D_w(i, pcol) = dsum;
    }
  }

  auto rel_dev = [](const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
    const double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-300);
    return (got - want).cwiseAbs().maxCoeff() / scale;
  };
  report.max_rel_dev = std::max(
      {rel_dev(A_w, ops.mean_from_additive), rel_dev(B_w, ops.mean_from_multiplicative),
       rel_dev(C_w, ops.var_from_additive), rel_dev(D_w, ops.var_from_multiplicative)});
  return report;
}

}  // namespace l96fdt

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "l96fdt/errors.hpp"
#include "l96fdt/integrate.hpp"
#include "l96fdt/model.hpp"
#include "l96fdt/stats.hpp"

namespace l96fdt {

struct RescalePair {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Long-run pooled mean and standard deviation of the uncoupled,
/// unrescaled Lorenz 96 model at the given forcing and dimension.
/// Throws DegenerateVarianceError when the attractor collapses
/// (e.g. forcing too small: the trajectory decays to a constant).
RescalePair calibrate_rescaling(double forcing, int n, const IntegrationPlan& plan);

/// Reference statistics taken from a full two-scale trajectory:
/// fast mean/covariance and the time averages of the coupling fields
/// (fast-time convention, prefactor lambda_x).
struct ReferenceStats {
  Vec zbar;
  Eigen::MatrixXd sigma;
  Vec h_star;
  Vec Hdiag_star;
  std::uint64_t samples = 0;
};

class ReferenceAccumulator {
 public:
  explicit ReferenceAccumulator(const ModelParams& p);

  void add(std::span<const double> x, std::span<const double> y);
  void merge(const ReferenceAccumulator& other);

  std::uint64_t count() const { return fast_moments_.count(); }
  ReferenceStats finalize() const;  ///< throws EmptyStreamError without samples

 private:
  ModelParams p_;
  MomentAccumulator fast_moments_;
  MomentAccumulator field_moments_;  // h ++ Hdiag stacked, fast-time scale
};

/// Eigenvalue-floored symmetric inverse. Directions with eigenvalues below
/// rel_floor * lambda_max are floored before inversion and counted.
struct RegularizedInverse {
  Eigen::MatrixXd inverse;
  int floored = 0;
  double lambda_max = 0.0;
  double lambda_min = 0.0;
};
RegularizedInverse regularized_inverse(const Eigen::MatrixXd& sigma,
                                       double rel_floor = 1e-8);

/// Symmetric positive square root via eigendecomposition.
Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& sigma);

/// The four flattened quasi-Gaussian response operators. With
/// dz(t) = z(t) - zbar_ref and w(t) = sigma_inv * dz(t), each entry is a
/// trapezoid lag integral over s in [0, s_max]:
///   mean_from_additive(i,k)      = int < dz_i(t+s)   w_k(t) >          ds
///   mean_from_multiplicative     = int < dz_i(t+s)   w_k(t) dz_k(t) >  ds
///   var_from_additive            = int < dz_i(t+s)^2 w_k(t) >          ds
///   var_from_multiplicative      = int < dz_i(t+s)^2 w_k(t) dz_k(t) - sigma_ii > ds
struct ResponseOperators {
  Eigen::MatrixXd mean_from_additive;        // A
  Eigen::MatrixXd mean_from_multiplicative;  // B
  Eigen::MatrixXd var_from_additive;         // C
  Eigen::MatrixXd var_from_multiplicative;   // D
  std::vector<std::string> warnings;
};

/// Streaming accumulation of the response operators over an unperturbed
/// fast-limiting trajectory sampled at the lag spacing. Uses one shared
/// t-window for all lags (t <= T - s_max) so the lag integral can be
/// maintained as a sliding window sum. Single-writer.
class ResponseOperatorAccumulator {
 public:
  ResponseOperatorAccumulator(Vec zbar_ref, const Eigen::MatrixXd& sigma_inv,
                              Vec sigma_diag_ref, double sample_dt, double lag_ds,
                              double s_max);

  void add(std::span<const double> z);

  std::int64_t emission_count() const { return emitted_; }
  ResponseOperators finalize() const;  ///< throws if the feed is shorter than s_max

 private:
  void emit_oldest();
  void refresh_sums();

  int dim_;
  Vec zbar_;
  Eigen::MatrixXd sigma_inv_;
  Eigen::VectorXd sigma_diag_;
  double ds_, s_max_;
  int lag_count_;
  std::size_t ring_cap_;
  Eigen::MatrixXd ring_;     // dim x ring_cap columns of dz
  Eigen::MatrixXd ring_sq_;  // squares
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::int64_t emitted_ = 0;
  Eigen::VectorXd win_sum_, win_sum_sq_;  // plain window sums over the ring
  Eigen::MatrixXd acc_a_, acc_b_, acc_c_, acc_d_;
  // tail diagnostics at s = s_max, split into alternating time blocks
  Eigen::MatrixXd tail_[4][2];
  std::int64_t tail_n_[2] = {0, 0};
  Eigen::VectorXd scratch_u_, scratch_v_, scratch_w_, scratch_wd_;
};

/// Drives the fast limiting system with the given (unperturbed) fields and
/// accumulates the response operators. The plan is interpreted in fast time.
ResponseOperators compute_response_operators(const ModelParams& p,
                                             const CouplingFields& fields,
                                             const IntegrationPlan& plan,
                                             const Vec& zbar_ref,
                                             const Eigen::MatrixXd& sigma_inv,
                                             const Vec& sigma_diag_ref,
                                             double lag_ds, double s_max);

/// Everything the closed reduced model needs.
struct CalibrationMeta {
  double reference_window = 0.0;
  double operator_window = 0.0;
  double lag_ds = 0.0;
  double s_max = 0.0;
  std::uint64_t seed = 0;
  int floored_eigenvalues = 0;
  std::string stats_source = "full";  // "full" | "limiting"
  bool symmetrized = false;
  std::vector<std::string> warnings;
};

struct CalibrationData {
  ModelParams params;  // resolved, rescaling constants included
  Vec zbar_star;
  Eigen::MatrixXd sigma_star;
  Eigen::MatrixXd sigma_star_inv;
  Vec h_star;
  Vec Hdiag_star;
  ResponseOperators ops;
  CalibrationMeta meta;

  Vec sigma_star_diag() const;
};

struct FastStatsPrediction {
  Vec zbar;
  Vec sigma_diag;
};

/// Linear FDT prediction of the fast mean and diagonal covariance at slow
/// state x. Perturbations are taken in the fast-time convention; negative
/// predicted variances are left as-is (clamping happens in the averaged
/// coupling term).
FastStatsPrediction predict_fast_stats(const Vec& x, const CalibrationData& cal,
                                       const ModelParams& p);

/// Averages operator entries over block translations (i, k) -> (i+J, k+J).
void symmetrize_over_blocks(Eigen::MatrixXd& op, int j_fast);

/// Appendix-style equivalence oracle: recomputes the operators in whitened
/// coordinates q = S^{-1}(z - zbar), S = sigma^{1/2}, maps back, and reports
/// the maximum relative deviation from the direct computation on the same
/// samples. Only meant for small dimensions.
struct WhitenedCheckReport {
  bool skipped = false;
  double condition = 0.0;
  double max_rel_dev = 0.0;
};
WhitenedCheckReport whitened_equivalence_check(const std::vector<Vec>& samples,
                                               const Vec& zbar,
                                               const Eigen::MatrixXd& sigma,
                                               double sample_dt, double lag_ds,
                                               double s_max,
                                               double max_condition = 1e10);

}  // namespace l96fdt

#pragma once

#include <cstdint>

#include "l96fdt/calibrate.hpp"
#include "l96fdt/model.hpp"

namespace l96fdt {

/// The two closed slow-variable models.
enum class ClosureKind { Reduced, ZeroOrder };

/// Rescaled slow Lorenz terms plus the averaged coupling term with the
/// FDT-corrected fast statistics evaluated at x.
Vec reduced_rhs(const Vec& x, const CalibrationData& cal, const ModelParams& p);

/// Same with the fast statistics frozen at their reference values.
Vec zero_order_rhs(const Vec& x, const CalibrationData& cal, const ModelParams& p);

/// Integrator functor for either closure. Counts clamp events (negative
/// predicted variances) for run diagnostics. The prediction is evaluated
/// fresh at every call; no caching across RK4 stages.
class ClosureRhs {
 public:
  ClosureRhs(ClosureKind kind, const CalibrationData& cal, const ModelParams& p);

  void operator()(const Vec& x, Vec& dx);

  std::uint64_t clamp_events() const { return clamp_events_; }
  ClosureKind kind() const { return kind_; }

 private:
  ClosureKind kind_;
  const CalibrationData& cal_;
  ModelParams p_;
  std::uint64_t clamp_events_ = 0;
  std::vector<double> halo_;
  Eigen::VectorXd dh_, dH_, pvec_, zb_, sd_;
  Eigen::VectorXd zbar_ref_, sigma_diag_ref_;
};

}  // namespace l96fdt

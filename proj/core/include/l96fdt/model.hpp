#pragma once

#include <span>
#include <vector>

#include "l96fdt/errors.hpp"

namespace l96fdt {

using Vec = std::vector<double>;

/// Parameters of the rescaled two-scale Lorenz 96 system with quadratic
/// and multiplicative coupling.
///
/// The slow ring has `nx` sites; each slow site carries `j_fast` fast sites,
/// so the fast ring has `ny() = nx * j_fast` sites with global periodic
/// wrapping (the fast index runs around the whole ring, not per block).
struct ModelParams {
  int nx = 20;      ///< number of slow variables
  int j_fast = 4;   ///< fast variables per slow variable
  double eps = 0.01;  ///< time scale separation

  double f_x = 6.0;   ///< slow forcing
  double f_y = 12.0;  ///< fast forcing

  double lambda_x = 0.3;  ///< strength of the slow state entering the fast equation
  double lambda_y = 0.3;  ///< strength of the fast state entering the slow equation

  // Coupling shape constants. (a) linear, (b) slow-quadratic, (c) fast-quadratic,
  // (d) fully quadratic/multiplicative.
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;

  double xbar = 0.0;    ///< slow rescaling mean
  double beta_x = 1.0;  ///< slow rescaling standard deviation
  double ybar = 0.0;    ///< fast rescaling mean
  double beta_y = 1.0;  ///< fast rescaling standard deviation

  int ny() const { return nx * j_fast; }

  /// Throws ValidationError if the advection stencils would self-overlap
  /// (nx or ny < 4) or if eps/beta are not positive.
  void validate() const;
};

/// Concatenated system state: slow variables x (length nx) and fast
/// variables y (length ny, flat index m = i*j_fast + j).
struct SystemState {
  Vec x;
  Vec y;
};

/// Slow-state-dependent forcing fields of the fast equation:
/// an additive vector h and the diagonal of the multiplicative matrix H.
/// Entries within one slow block are equal by construction.
struct CouplingFields {
  Vec h;
  Vec Hdiag;
};

/// Prefactor convention for the coupling fields. The full two-scale model
/// carries lambda_x/eps on the fast coupling; calibration runs the fast
/// system in its own time variable, where the factor is plain lambda_x.
enum class CouplingScale { FullModel, FastTime };

/// Right-hand side of the full two-scale rescaled model. Validates the
/// input state (finiteness, lengths) and throws ValidationError on bad input.
SystemState full_rhs(const SystemState& state, const ModelParams& p);

/// Unrescaled, uncoupled Lorenz 96: v'_i = v_{i-1}(v_{i+1} - v_{i-2}) - v_i + F.
Vec uncoupled_unrescaled_rhs(const Vec& v, double forcing);

/// Rescaled uncoupled slow equation (the slow part of the full model with
/// lambda_y = 0).
Vec rescaled_slow_rhs(const Vec& x, const ModelParams& p);

/// Rescaled uncoupled fast equation in fast time (the bracket of the fast
/// part of the full model, without the 1/eps factor and without coupling).
Vec rescaled_fast_rhs(const Vec& z, const ModelParams& p);

/// Contribution of the coupling terms alone to the energy
/// E = (lambda_x / 2 eps) sum x^2 + (lambda_y / 2 J) sum y^2.
/// Computes the slow-side and fast-side quadratic-form sums through their
/// two different groupings and returns the sum, which cancels analytically.
double coupling_energy_rate(const SystemState& state, const ModelParams& p);

/// h(x) and diag H(x): h = K(a x_i + b x_i^2), Hdiag = K(c x_i + d x_i^2)
/// replicated over each slow block, with K = lambda_x/eps (FullModel) or
/// K = lambda_x (FastTime).
CouplingFields coupling_fields(const Vec& x, const ModelParams& p,
                               CouplingScale scale);

/// Fast limiting system in fast time: z' = g(z) + Hdiag .* z + h, where g
/// carries the Lorenz terms plus the x-independent coupling remainder
/// -lambda_x (b + d z) left over after h/H absorb all x-dependence.
Vec fast_limiting_rhs(const Vec& z, const CouplingFields& fields,
                      const ModelParams& p);

/// Average of the slow coupling term over Gaussian fast statistics with
/// mean zbar and diagonal covariance sigma_diag (entries clamped at zero):
/// out_i = -(lambda_y/J) sum_j [(a+b x_i) zbar_m + (c+d x_i)(zbar_m^2 + sigma_m - 1)].
/// Exact for Gaussian statistics because the coupling is quadratic in y.
Vec averaged_coupling_term(const Vec& x, const Vec& zbar, const Vec& sigma_diag,
                           const ModelParams& p);

namespace detail {

/// Unvalidated flat-layout right-hand sides used by the integrators.
/// Layout: state[0..nx) = x, state[nx..nx+ny) = y.
void full_rhs_flat(std::span<const double> state, std::span<double> deriv,
                   const ModelParams& p, std::vector<double>& halo_scratch);

void uncoupled_rhs_flat(std::span<const double> v, std::span<double> dv,
                        double forcing, std::vector<double>& halo_scratch);

void rescaled_slow_rhs_flat(std::span<const double> x, std::span<double> dx,
                            const ModelParams& p, std::vector<double>& halo_scratch);

void rescaled_fast_rhs_flat(std::span<const double> z, std::span<double> dz,
                            const ModelParams& p, std::vector<double>& halo_scratch);

void fast_limiting_rhs_flat(std::span<const double> z, std::span<double> dz,
                            std::span<const double> h, std::span<const double> Hdiag,
                            const ModelParams& p, std::vector<double>& halo_scratch);

}  // namespace detail

/// Reusable functor for the full two-scale model (owns halo scratch).
class TwoScaleRhs {
 public:
  explicit TwoScaleRhs(const ModelParams& p) : p_(p) { p_.validate(); }

  void operator()(const Vec& state, Vec& deriv) {
    detail::full_rhs_flat(state, deriv, p_, halo_);
  }

  const ModelParams& params() const { return p_; }

 private:
  ModelParams p_;
  std::vector<double> halo_;
};

/// Reusable functor for the fast limiting system (fast time units).
class FastLimitingRhs {
 public:
  FastLimitingRhs(const ModelParams& p, CouplingFields fields)
      : p_(p), fields_(std::move(fields)) {
    p_.validate();
    if (static_cast<int>(fields_.h.size()) != p_.ny() ||
        static_cast<int>(fields_.Hdiag.size()) != p_.ny()) {
      throw DimensionError("coupling fields must have length ny");
    }
  }

  void operator()(const Vec& z, Vec& dz) {
    detail::fast_limiting_rhs_flat(z, dz, fields_.h, fields_.Hdiag, p_, halo_);
  }

  const CouplingFields& fields() const { return fields_; }

 private:
  ModelParams p_;
  CouplingFields fields_;
  std::vector<double> halo_;
};

/// Reusable functor for the unrescaled uncoupled Lorenz 96 ring.
class UncoupledRhs {
 public:
  explicit UncoupledRhs(double forcing) : forcing_(forcing) {}
  void operator()(const Vec& v, Vec& dv) {
    detail::uncoupled_rhs_flat(v, dv, forcing_, halo_);
  }

 private:
  double forcing_;
  std::vector<double> halo_;
};

/// Reusable functor for the rescaled uncoupled slow ring.
class RescaledSlowRhs {
 public:
  explicit RescaledSlowRhs(const ModelParams& p) : p_(p) {}
  void operator()(const Vec& x, Vec& dx) {
    detail::rescaled_slow_rhs_flat(x, dx, p_, halo_);
  }

 private:
  ModelParams p_;
  std::vector<double> halo_;
};

/// Reusable functor for the rescaled uncoupled fast ring in fast time.
class RescaledFastRhs {
 public:
  explicit RescaledFastRhs(const ModelParams& p) : p_(p) {}
  void operator()(const Vec& z, Vec& dz) {
    detail::rescaled_fast_rhs_flat(z, dz, p_, halo_);
  }

 private:
  ModelParams p_;
  std::vector<double> halo_;
};

/// Pack (x|y) into the flat layout used by the integrators.
Vec pack_state(const SystemState& state);

/// Split a flat state back into (x, y).
SystemState unpack_state(const Vec& flat, const ModelParams& p);

}  // namespace l96fdt

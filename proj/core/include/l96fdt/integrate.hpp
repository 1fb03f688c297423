#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "l96fdt/errors.hpp"
#include "l96fdt/model.hpp"

namespace l96fdt {

/// Fixed-step integration schedule with streaming observation.
struct IntegrationPlan {
  double dt = 5e-3;        ///< step size
  double t_burn = 100.0;   ///< discarded before observation
  double t_total = 2000.0; ///< observed duration
  int sample_stride = 10;  ///< steps between observer callbacks
  std::uint64_t seed = 1;  ///< initial-condition stream

  void validate() const {
    if (!(dt > 0.0)) throw ValidationError("plan: dt must be positive");
    if (t_burn < 0.0) throw ValidationError("plan: t_burn must be >= 0");
    if (!(t_total > 0.0)) throw ValidationError("plan: t_total must be positive");
    if (sample_stride < 1) throw ValidationError("plan: sample_stride must be >= 1");
  }

  std::int64_t burn_steps() const {
    return static_cast<std::int64_t>(std::floor(t_burn / dt + 1e-9));
  }
  std::int64_t observed_samples() const {
    return static_cast<std::int64_t>(
        std::floor(t_total / (dt * sample_stride) + 1e-9));
  }
};

/// SplitMix64: tiny splittable generator with a frozen output sequence,
/// used for platform-independent initial conditions.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [-0.5, 0.5].
  double next_centered() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53 - 0.5;
  }

 private:
  std::uint64_t state_;
};

/// Deterministic pseudo-random vector with entries uniform in [-0.5, 0.5].
Vec uniform_random_state(int dim, std::uint64_t seed);

/// Initial condition for the full two-scale model: x entries first,
/// then y entries, drawn from one SplitMix64 stream.
SystemState default_initial_state(const ModelParams& p, std::uint64_t seed);

/// Preallocated stage storage for rk4_step.
struct Rk4Scratch {
  Vec k1, k2, k3, k4, tmp;

  void resize(std::size_t n) {
    k1.resize(n);
    k2.resize(n);
    k3.resize(n);
    k4.resize(n);
    tmp.resize(n);
  }
};

namespace detail {

inline double max_abs(const Vec& v) {
  double m = 0.0;
  for (double u : v) {
    const double a = std::fabs(u);
    if (!(a <= m)) m = a;  // NaN fails the comparison and is captured
  }
  return m;
}

}  // namespace detail

/// Classical 4th-order Runge-Kutta update, in place. Throws BlowUpError
/// (tagged with `t_diag`) if the updated state is non-finite.
template <class Rhs>
void rk4_step(Rhs&& rhs, Vec& state, double dt, Rk4Scratch& s,
              double t_diag = 0.0) {
  const std::size_t n = state.size();
  s.resize(n);
  rhs(state, s.k1);
  for (std::size_t i = 0; i < n; ++i) s.tmp[i] = state[i] + 0.5 * dt * s.k1[i];
  rhs(s.tmp, s.k2);
  for (std::size_t i = 0; i < n; ++i) s.tmp[i] = state[i] + 0.5 * dt * s.k2[i];
  rhs(s.tmp, s.k3);
  for (std::size_t i = 0; i < n; ++i) s.tmp[i] = state[i] + dt * s.k3[i];
  rhs(s.tmp, s.k4);
  const double w = dt / 6.0;
  for (std::size_t i = 0; i < n; ++i) {
    state[i] += w * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
  }
  const double m = detail::max_abs(state);
  if (!std::isfinite(m) || m > 1e12) throw BlowUpError(t_diag, m);
}

/// Convenience single-step entry point.
template <class Rhs>
Vec rk4_step(Rhs&& rhs, const Vec& state, double dt) {
  if (!(dt > 0.0)) throw ValidationError("rk4_step: dt must be positive");
  Vec out = state;
  Rk4Scratch scratch;
  rk4_step(std::forward<Rhs>(rhs), out, dt, scratch);
  return out;
}

/// Runs the burn-in unobserved, then invokes `observer(t, state)` every
/// `sample_stride` steps; exactly floor(t_total / (dt*stride)) calls.
/// Observer times are absolute (burn-in included) and computed as
/// step_count * dt, so repeated runs see bit-identical streams.
template <class Rhs, class Observer>
Vec integrate_observed(Rhs&& rhs, Vec state, const IntegrationPlan& plan,
                       Observer&& observer) {
  plan.validate();
  Rk4Scratch scratch;
  const std::int64_t burn = plan.burn_steps();
  const std::int64_t n_obs = plan.observed_samples();
  std::int64_t step = 0;
  for (std::int64_t k = 0; k < burn; ++k, ++step) {
    rk4_step(rhs, state, plan.dt, scratch, static_cast<double>(step) * plan.dt);
  }
  for (std::int64_t o = 0; o < n_obs; ++o) {
    for (int k = 0; k < plan.sample_stride; ++k, ++step) {
      rk4_step(rhs, state, plan.dt, scratch, static_cast<double>(step) * plan.dt);
    }
    observer(static_cast<double>(step) * plan.dt, state);
  }
  return state;
}

}  // namespace l96fdt

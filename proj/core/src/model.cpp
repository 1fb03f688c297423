#include "l96fdt/model.hpp"

#include <cmath>
#include <cstddef>

namespace l96fdt {

namespace {

bool all_finite(std::span<const double> v) {
  for (double u : v) {
    if (!std::isfinite(u)) return false;
  }
  return true;
}

// Copies v into scratch with a two-entry periodic halo on each side, and
// returns a pointer to the first real entry. Keeps the advection loops
// free of index wrapping.
const double* haloed(std::span<const double> v, std::vector<double>& scratch,
                     std::size_t offset) {
  const std::size_t n = v.size();
  if (scratch.size() < offset + n + 4) scratch.resize(offset + n + 4);
  double* s = scratch.data() + offset;
  s[0] = v[n - 2];
  s[1] = v[n - 1];
  for (std::size_t i = 0; i < n; ++i) s[2 + i] = v[i];
  s[2 + n] = v[0];
  s[3 + n] = v[1];
  return s + 2;
}

}  // namespace

void ModelParams::validate() const {
  if (nx < 4 || j_fast < 1 || ny() < 4) {
    throw ValidationError("need nx >= 4 and ny = nx*j_fast >= 4");
  }
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  if (!(beta_x > 0.0) || !(beta_y > 0.0)) {
    throw ValidationError("beta_x and beta_y must be positive");
  }
}

namespace detail {

void uncoupled_rhs_flat(std::span<const double> v, std::span<double> dv,
                        double forcing, std::vector<double>& scratch) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(v.size());
  const double* a = haloed(v, scratch, 0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    dv[static_cast<std::size_t>(i)] =
        a[i - 1] * (a[i + 1] - a[i - 2]) - a[i] + forcing;
  }
}

void rescaled_slow_rhs_flat(std::span<const double> x, std::span<double> dx,
                            const ModelParams& p, std::vector<double>& scratch) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  const double* a = haloed(x, scratch, 0);
  const double inv_bx = 1.0 / p.beta_x;
  const double fconst = (p.f_x - p.xbar) / (p.beta_x * p.beta_x);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double adv = a[i + 1] - a[i - 2];
    dx[static_cast<std::size_t>(i)] =
        a[i - 1] * adv + (p.xbar * adv - a[i]) * inv_bx + fconst;
  }
}

void rescaled_fast_rhs_flat(std::span<const double> z, std::span<double> dz,
                            const ModelParams& p, std::vector<double>& scratch) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(z.size());
  const double* a = haloed(z, scratch, 0);
  const double inv_by = 1.0 / p.beta_y;
  const double fconst = (p.f_y - p.ybar) / (p.beta_y * p.beta_y);
  for (std::ptrdiff_t m = 0; m < n; ++m) {
    const double adv = a[m - 1] - a[m + 2];
    dz[static_cast<std::size_t>(m)] =
        a[m + 1] * adv + (p.ybar * adv - a[m]) * inv_by + fconst;
  }
}

void fast_limiting_rhs_flat(std::span<const double> z, std::span<double> dz,
                            std::span<const double> h, std::span<const double> Hdiag,
                            const ModelParams& p, std::vector<double>& scratch) {
  if (z.size() != h.size() || z.size() != Hdiag.size() || z.size() != dz.size()) {
    throw DimensionError("fast_limiting_rhs: state/field length mismatch");
  }
  rescaled_fast_rhs_flat(z, dz, p, scratch);
  const std::size_t n = z.size();
  for (std::size_t m = 0; m < n; ++m) {
    dz[m] += -p.lambda_x * (p.b + p.d * z[m]) + Hdiag[m] * z[m] + h[m];
  }
}

void full_rhs_flat(std::span<const double> state, std::span<double> deriv,
                   const ModelParams& p, std::vector<double>& scratch) {
  const std::size_t nx = static_cast<std::size_t>(p.nx);
  const std::size_t ny = static_cast<std::size_t>(p.ny());
  const std::ptrdiff_t jf = p.j_fast;

  auto x = state.subspan(0, nx);
  auto y = state.subspan(nx, ny);
  auto dx = deriv.subspan(0, nx);
  auto dy = deriv.subspan(nx, ny);

  if (scratch.size() < nx + ny + 8) scratch.resize(nx + ny + 8);
  const double* hx = haloed(x, scratch, 0);
  const double* hy = haloed(y, scratch, nx + 4);

  const double inv_bx = 1.0 / p.beta_x;
  const double inv_by = 1.0 / p.beta_y;
  const double fconst_x = (p.f_x - p.xbar) / (p.beta_x * p.beta_x);
  const double fconst_y = (p.f_y - p.ybar) / (p.beta_y * p.beta_y);
  const double inv_eps = 1.0 / p.eps;
  const double lam_x_eps = p.lambda_x * inv_eps;
  const double lam_y_j = p.lambda_y / static_cast<double>(jf);

  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(nx); ++i) {
    const double xi = hx[i];
    // block sums of y and y^2 for the slow coupling term
    double sy = 0.0, syy = 0.0;
    const std::ptrdiff_t base = i * jf;
    for (std::ptrdiff_t j = 0; j < jf; ++j) {
      const double v = hy[base + j];
      sy += v;
      syy += v * v;
    }
    const double coup =
        (p.a + p.b * xi) * sy + (p.c + p.d * xi) * (syy - static_cast<double>(jf));
    const double adv = hx[i + 1] - hx[i - 2];
    dx[static_cast<std::size_t>(i)] =
        hx[i - 1] * adv + (p.xbar * adv - xi) * inv_bx + fconst_x - lam_y_j * coup;

    const double xi2m1 = xi * xi - 1.0;
    for (std::ptrdiff_t j = 0; j < jf; ++j) {
      const std::ptrdiff_t m = base + j;
      const double v = hy[m];
      const double advf = hy[m - 1] - hy[m + 2];
      dy[static_cast<std::size_t>(m)] =
          inv_eps * (hy[m + 1] * advf + (p.ybar * advf - v) * inv_by + fconst_y) +
          lam_x_eps * ((p.a + p.c * v) * xi + (p.b + p.d * v) * xi2m1);
    }
  }
}

}  // namespace detail

Vec uncoupled_unrescaled_rhs(const Vec& v, double forcing) {
  if (v.size() < 4) throw DimensionError("uncoupled_unrescaled_rhs: need length >= 4");
  Vec dv(v.size());
  std::vector<double> scratch;
  detail::uncoupled_rhs_flat(v, dv, forcing, scratch);
  return dv;
}

Vec rescaled_slow_rhs(const Vec& x, const ModelParams& p) {
  if (static_cast<int>(x.size()) != p.nx) {
    throw DimensionError("rescaled_slow_rhs: expected length nx");
  }
  Vec dx(x.size());
  std::vector<double> scratch;
  detail::rescaled_slow_rhs_flat(x, dx, p, scratch);
  return dx;
}

Vec rescaled_fast_rhs(const Vec& z, const ModelParams& p) {
  if (static_cast<int>(z.size()) != p.ny()) {
    throw DimensionError("rescaled_fast_rhs: expected length ny");
  }
  Vec dz(z.size());
  std::vector<double> scratch;
  detail::rescaled_fast_rhs_flat(z, dz, p, scratch);
  return dz;
}

SystemState full_rhs(const SystemState& state, const ModelParams& p) {
  p.validate();
  if (static_cast<int>(state.x.size()) != p.nx ||
      static_cast<int>(state.y.size()) != p.ny()) {
    throw DimensionError("full_rhs: state lengths do not match params");
  }
  if (!all_finite(state.x) || !all_finite(state.y)) {
    throw ValidationError("full_rhs: non-finite entries in state");
  }
  Vec flat = pack_state(state);
  Vec deriv(flat.size());
  std::vector<double> scratch;
  detail::full_rhs_flat(flat, deriv, p, scratch);
  return unpack_state(deriv, p);
}

double coupling_energy_rate(const SystemState& state, const ModelParams& p) {
  p.validate();
  if (static_cast<int>(state.x.size()) != p.nx ||
      static_cast<int>(state.y.size()) != p.ny()) {
    throw DimensionError("coupling_energy_rate: state lengths do not match params");
  }
  if (!all_finite(state.x) || !all_finite(state.y)) {
    throw ValidationError("coupling_energy_rate: non-finite entries in state");
  }
  const std::size_t jf = static_cast<std::size_t>(p.j_fast);

  // Slow-side grouping: sum_i x_i [(a + b x_i) y + (c + d x_i) y^2].
  double s_slow = 0.0;
  // Fast-side grouping: sum_m y_m [(a + c y_m) x + (b + d y_m) x^2].
  double s_fast = 0.0;
  for (std::size_t i = 0; i < state.x.size(); ++i) {
    const double xi = state.x[i];
    double sy = 0.0, syy = 0.0;
    for (std::size_t j = 0; j < jf; ++j) {
      const double v = state.y[i * jf + j];
      sy += v;
      syy += v * v;
      s_fast += v * ((p.a + p.c * v) * xi + (p.b + p.d * v) * xi * xi);
    }
    s_slow += xi * ((p.a + p.b * xi) * sy + (p.c + p.d * xi) * syy);
  }
  const double pref = p.lambda_x * p.lambda_y / (p.eps * static_cast<double>(jf));
  return pref * (s_fast - s_slow);
}

CouplingFields coupling_fields(const Vec& x, const ModelParams& p,
                               CouplingScale scale) {
  if (static_cast<int>(x.size()) != p.nx) {
    throw DimensionError("coupling_fields: expected length nx");
  }
  const double k = scale == CouplingScale::FullModel ? p.lambda_x / p.eps : p.lambda_x;
  CouplingFields f;
  f.h.resize(p.ny());
  f.Hdiag.resize(p.ny());
  for (int i = 0; i < p.nx; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    const double hv = k * (p.a * xi + p.b * xi * xi);
    const double Hv = k * (p.c * xi + p.d * xi * xi);
    for (int j = 0; j < p.j_fast; ++j) {
      const std::size_t m = static_cast<std::size_t>(i * p.j_fast + j);
      f.h[m] = hv;
      f.Hdiag[m] = Hv;
    }
  }
  return f;
}

Vec fast_limiting_rhs(const Vec& z, const CouplingFields& fields,
                      const ModelParams& p) {
  if (static_cast<int>(z.size()) != p.ny()) {
    throw DimensionError("fast_limiting_rhs: expected length ny");
  }
  Vec dz(z.size());
  std::vector<double> scratch;
  detail::fast_limiting_rhs_flat(z, dz, fields.h, fields.Hdiag, p, scratch);
  return dz;
}

Vec averaged_coupling_term(const Vec& x, const Vec& zbar, const Vec& sigma_diag,
                           const ModelParams& p) {
  if (static_cast<int>(x.size()) != p.nx ||
      static_cast<int>(zbar.size()) != p.ny() ||
      static_cast<int>(sigma_diag.size()) != p.ny()) {
    throw DimensionError("averaged_coupling_term: length mismatch");
  }
  const std::size_t jf = static_cast<std::size_t>(p.j_fast);
  const double lam_y_j = p.lambda_y / static_cast<double>(jf);
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < jf; ++j) {
      const std::size_t m = i * jf + j;
      const double zb = zbar[m];
      const double sd = sigma_diag[m] > 0.0 ? sigma_diag[m] : 0.0;
      s1 += zb;
      s2 += zb * zb + sd - 1.0;
    }
    out[i] = -lam_y_j * ((p.a + p.b * x[i]) * s1 + (p.c + p.d * x[i]) * s2);
  }
  return out;
}

Vec pack_state(const SystemState& state) {
  Vec flat;
  flat.reserve(state.x.size() + state.y.size());
  flat.insert(flat.end(), state.x.begin(), state.x.end());
  flat.insert(flat.end(), state.y.begin(), state.y.end());
  return flat;
}

SystemState unpack_state(const Vec& flat, const ModelParams& p) {
  const std::size_t nx = static_cast<std::size_t>(p.nx);
  const std::size_t ny = static_cast<std::size_t>(p.ny());
  if (flat.size() != nx + ny) {
    throw DimensionError("unpack_state: flat length does not match params");
  }
  SystemState s;
  s.x.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(nx));
  s.y.assign(flat.begin() + static_cast<std::ptrdiff_t>(nx), flat.end());
  return s;
}

}  // namespace l96fdt

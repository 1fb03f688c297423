#include "l96fdt/integrate.hpp"

namespace l96fdt {

Vec uniform_random_state(int dim, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Vec v(static_cast<std::size_t>(dim));
  for (double& u : v) u = rng.next_centered();
  return v;
}

SystemState default_initial_state(const ModelParams& p, std::uint64_t seed) {
  SplitMix64 rng(seed);
  SystemState s;
  s.x.resize(static_cast<std::size_t>(p.nx));
  s.y.resize(static_cast<std::size_t>(p.ny()));
  for (double& u : s.x) u = rng.next_centered();
  for (double& u : s.y) u = rng.next_centered();
  return s;
}

}  // namespace l96fdt

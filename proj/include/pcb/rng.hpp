#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pcb {

// Explicit random stream. Every stochastic operation takes one of these by
// reference; there is no global generator. Uniform and normal draws are
// computed here from raw 64-bit output so that results do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Independent stream keyed by a seed and a path of integers, e.g.
  // derive(seed, {epoch, step, sample}). Order of draws elsewhere does not
  // affect the derived stream.
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform in (0, 1); never returns 0.
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Gumbel(0, 1) noise, -log(-log(u)).
  double gumbel();

 private:
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace pcb

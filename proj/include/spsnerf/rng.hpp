#pragma once

#include <cstdint>
#include <random>

namespace spsnerf {

// Deterministic random stream. Per-ray streams are seeded as seed ^ ray_index
// so draws depend only on (seed, ray index), never on batch order or thread
// assignment.
struct RayRng {
  std::mt19937_64 eng;

  explicit RayRng(std::uint64_t seed) : eng(seed) {}
  RayRng(std::uint64_t seed, std::uint64_t index) : eng(seed ^ index) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng); }
};

// Stream for batch-level decisions at a given step (pixel picks etc.).
inline RayRng step_rng(std::uint64_t seed, std::uint64_t step) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32),
                    std::uint32_t(step), std::uint32_t(step >> 32), 0x62617463u};
  std::mt19937_64 eng(seq);
  RayRng r(0);
  r.eng = eng;
  return r;
}

}  // namespace spsnerf

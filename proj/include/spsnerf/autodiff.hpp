#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "spsnerf/params.hpp"

namespace spsnerf {

// Per-worker gradient accumulator mirroring a store's array layout. Workers
// accumulate locally and the buffers are reduced in worker order, keeping
// results independent of scheduling for a fixed worker count.
template <class Real>
struct GradBuffers {
  std::vector<std::vector<Real>> g;

  explicit GradBuffers(const ParamStoreT<Real>& store) {
    g.resize(store.arrays.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i].assign(store.arrays[i].size(), Real(0));
  }
  void add_into(ParamStoreT<Real>& store) const {
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto& dst = store.arrays[i].grad;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[i][k];
    }
  }
};

struct AdamConfig {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// One Adam update with bias correction from the gradients held in the store.
// Throws std::runtime_error naming the array on a non-finite gradient.
template <class Real>
void adam_step(ParamStoreT<Real>& store, double lr, const AdamConfig& cfg = {}) {
  store.step += 1;
  const double t = double(store.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& a : store.arrays) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double gi = double(a.grad[i]);
      if (!std::isfinite(gi))
        throw std::runtime_error("adam_step: non-finite gradient in " + a.name);
      const double m = cfg.beta1 * double(a.m1[i]) + (1.0 - cfg.beta1) * gi;
      const double v = cfg.beta2 * double(a.m2[i]) + (1.0 - cfg.beta2) * gi * gi;
      a.m1[i] = Real(m);
      a.m2[i] = Real(v);
      a.value[i] = Real(double(a.value[i]) - lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
    }
  }
}

}  // namespace spsnerf

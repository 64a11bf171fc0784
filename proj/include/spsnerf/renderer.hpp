#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace spsnerf {

inline constexpr double kDepthVarFloor = 1e-12;

template <class Real>
inline Real alpha_from_sigma(Real sigma, double delta) {
  return Real(1) - Real(std::exp(-double(sigma) * delta));
}

// Front-to-back alpha compositing over one ray's sorted samples.
// weight[i] = T_i * alpha_i with T_i the transmittance past samples j < i;
// rgb/depth are weight-sums of the per-sample colors/distances, and depth_std
// is the square root of the weighted variance of the sample distances
// (floored before the root so it stays differentiable-safe at zero spread).
template <class Real>
struct RenderResult {
  Real rgb[3] = {Real(0), Real(0), Real(0)};
  Real depth = Real(0);
  Real depth_std = Real(0);
  Real opacity = Real(0);  // sum of weights == 1 - final transmittance
  std::vector<Real> weight;
};

template <class Real>
RenderResult<Real> composite(const double* t, const double* delta, int n, const Real* sigma,
                             const Real* rgb) {
  if (n <= 0) throw std::invalid_argument("composite: empty sample set");
  RenderResult<Real> res;
  res.weight.resize(n);
  Real trans = Real(1);
  for (int i = 0; i < n; ++i) {
    const Real a = alpha_from_sigma(sigma[i], delta[i]);
    const Real w = trans * a;
    res.weight[i] = w;
    res.rgb[0] += w * rgb[3 * i + 0];
    res.rgb[1] += w * rgb[3 * i + 1];
    res.rgb[2] += w * rgb[3 * i + 2];
    res.depth += w * Real(t[i]);
    trans *= Real(1) - a;
  }
  res.opacity = Real(1) - trans;
  Real var = Real(0);
  for (int i = 0; i < n; ++i) {
    const Real d = Real(t[i]) - res.depth;
    var += res.weight[i] * d * d;
  }
  res.depth_std = Real(std::sqrt(std::max(double(var), kDepthVarFloor)));
  return res;
}

// Reverse pass given dL/d(rgb), dL/d(depth), dL/d(depth_std). Writes
// dL/d(sigma_i) and dL/d(rgb_i). The cross-sample transmittance term is
// accumulated with a suffix recurrence (no division by 1 - alpha, which
// stays exact when a sample saturates to alpha == 1).
template <class Real>
void composite_backward(const double* t, const double* delta, int n, const Real* sigma,
                        const Real* rgb, const RenderResult<Real>& res, const Real d_rgb_out[3],
                        Real d_depth, Real d_depth_std, Real* d_sigma, Real* d_rgb) {
  std::vector<Real> alpha(n), trans(n);
  Real tr = Real(1);
  for (int i = 0; i < n; ++i) {
    alpha[i] = alpha_from_sigma(sigma[i], delta[i]);
    trans[i] = tr;
    tr *= Real(1) - alpha[i];
  }

  Real var = Real(0);
  for (int i = 0; i < n; ++i) {
    const Real d = Real(t[i]) - res.depth;
    var += res.weight[i] * d * d;
  }
  const Real d_var = double(var) > kDepthVarFloor
                         ? d_depth_std / (Real(2) * res.depth_std)
                         : Real(0);
  // variance also shifts with depth: dvar/ddepth = -2 * depth * (1 - opacity)
  const Real g_depth = d_depth + d_var * Real(-2) * res.depth * (Real(1) - res.opacity);

  // g[i] = dL/d(weight_i)
  std::vector<Real> g(n);
  for (int i = 0; i < n; ++i) {
    const Real dt = Real(t[i]) - res.depth;
    g[i] = d_rgb_out[0] * rgb[3 * i + 0] + d_rgb_out[1] * rgb[3 * i + 1] +
           d_rgb_out[2] * rgb[3 * i + 2] + g_depth * Real(t[i]) + d_var * dt * dt;
    d_rgb[3 * i + 0] = res.weight[i] * d_rgb_out[0];
    d_rgb[3 * i + 1] = res.weight[i] * d_rgb_out[1];
    d_rgb[3 * i + 2] = res.weight[i] * d_rgb_out[2];
  }

  // acc = sum_{j>i} g_j alpha_j prod_{i<k<j} (1 - alpha_k), built back to front
  Real acc = Real(0);
  for (int i = n - 1; i >= 0; --i) {
    const Real d_alpha = trans[i] * (g[i] - acc);
    d_sigma[i] = d_alpha * Real(delta[i]) * (Real(1) - alpha[i]);
    acc = g[i] * alpha[i] + (Real(1) - alpha[i]) * acc;
  }
}

}  // namespace spsnerf

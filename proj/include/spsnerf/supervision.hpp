#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spsnerf {

// Dense depth prior for one ray: metric depth along the ray plus the image
// correlation score of the stereo match it came from.
struct DepthPrior {
  double depth = 0.0;
  double corr = 0.0;  // clamped to [0,1] when attached
  bool valid = false;
};

struct LossConfig {
  double lambda = 1.0 / 3.0;  // depth term weight in the total loss
  double gamma = 1.0;         // uncertainty slope over (1 - corr)
  double m_shift = 1e-4;      // uncertainty floor
  int weight_power = 1;       // corr exponent in the depth term (1 or 2)
  enum class Reduction { sum, mean } reduction = Reduction::sum;

  void validate() const {
    if (weight_power != 1 && weight_power != 2)
      throw std::invalid_argument("LossConfig: weight_power must be 1 or 2");
    if (!(gamma >= 0) || !(m_shift >= 0) || !(lambda >= 0))
      throw std::invalid_argument("LossConfig: negative weights");
  }
};

// Uncertainty shrinks linearly as the stereo correlation rises; m_shift keeps
// it strictly positive at corr == 1.
inline double prior_uncertainty(double corr, double gamma, double m_shift) {
  return gamma * (1.0 - corr) + m_shift;
}

// A ray takes depth supervision only while the rendered depth distribution is
// still broader than the prior uncertainty or its mean strays beyond it.
// Ties resolve to inactive.
inline bool depth_supervision_active(double depth, double prior_depth, double depth_std,
                                     double uncertainty) {
  return depth_std > uncertainty || std::abs(depth - prior_depth) > uncertainty;
}

// Loss pieces and output-side gradients for a single ray. Totals are plain
// sums over the batch; the caller applies reduction scaling.
struct RayLoss {
  double color = 0.0;       // squared color residual
  double depth = 0.0;       // corr-weighted squared depth residual (0 when gated off)
  bool active = false;      // depth branch engaged
  double d_rgb[3] = {0, 0, 0};  // d(color residual)/d(rendered rgb)
  double d_depth = 0.0;         // d(depth residual)/d(rendered depth), without lambda
};

inline RayLoss ray_loss(const double rendered_rgb[3], const float target[3], double depth,
                        double depth_std, const DepthPrior& prior, const LossConfig& cfg) {
  RayLoss out;
  for (int c = 0; c < 3; ++c) {
    const double r = rendered_rgb[c] - double(target[c]);
    out.color += r * r;
    out.d_rgb[c] = 2.0 * r;
  }
  if (prior.valid) {
    const double corr = std::clamp(prior.corr, 0.0, 1.0);
    const double unc = prior_uncertainty(corr, cfg.gamma, cfg.m_shift);
    if (depth_supervision_active(depth, prior.depth, depth_std, unc)) {
      const double w = cfg.weight_power == 2 ? corr * corr : corr;
      const double r = depth - prior.depth;
      out.depth = w * r * r;
      out.d_depth = w * 2.0 * r;
      out.active = true;
    }
  }
  return out;
}

}  // namespace spsnerf

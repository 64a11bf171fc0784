#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "spsnerf/autodiff.hpp"
#include "spsnerf/geometry.hpp"
#include "spsnerf/network.hpp"
#include "spsnerf/renderer.hpp"
#include "spsnerf/sampler.hpp"
#include "spsnerf/supervision.hpp"
#include "spsnerf/threads.hpp"

namespace spsnerf {

// One supervised ray with a frozen sample set. Sample placement is decided
// before the differentiable pass and treated as constant by the gradients.
struct RayTask {
  Ray ray;
  float target[3] = {0, 0, 0};
  DepthPrior prior;
  RaySampleSet samples;
};

struct LossTotals {
  double color = 0.0;
  double depth = 0.0;
  double total = 0.0;
  int active_rays = 0;
};

// Maps world positions into the [-1,1]^3 cube spanned by the envelope before
// encoding, so the sin/cos ladder sees bounded inputs.
inline void normalize_positions(const SceneEnvelope& env, const Ray& ray,
                                const std::vector<double>& ts, std::vector<double>& out) {
  const Vec3 lo = env.lo(), hi = env.hi();
  out.resize(ts.size() * 3);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const double x = ray.o[a] + ts[i] * ray.d[a];
      const double span = hi[a] - lo[a];
      out[3 * i + a] = span > 0 ? 2.0 * (x - lo[a]) / span - 1.0 : 0.0;
    }
  }
}

// Forward-only evaluation of one ray over a given sample set.
template <class Real>
RenderResult<Real> render_ray(const ParamStoreT<Real>& store, const FieldConfig& cfg,
                              const SceneEnvelope& env, const Ray& ray, const RaySampleSet& set,
                              FieldTrace<Real>& tr, std::vector<double>& pos_scratch) {
  normalize_positions(env, ray, set.t, pos_scratch);
  double dir[3] = {ray.d.x(), ray.d.y(), ray.d.z()};
  field_forward(store, cfg, pos_scratch.data(), dir, set.size(), tr);
  return composite(set.t.data(), set.delta.data(), set.size(), tr.sigma.data(), tr.rgb.data());
}

// Full differentiable pass over a batch of rays with frozen samples: field ->
// compositing -> losses, then the hand-written reverse pass into store.grad.
// Gradients match the analytic derivative of the scaled total
// color + lambda * depth; set with_grad=false for loss evaluation only.
template <class Real>
LossTotals forward_backward(ParamStoreT<Real>& store, const FieldConfig& field_cfg,
                            const SceneEnvelope& env, const LossConfig& loss_cfg,
                            const std::vector<RayTask>& batch, bool with_grad = true) {
  loss_cfg.validate();
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("forward_backward: empty batch");
  const double scale = loss_cfg.reduction == LossConfig::Reduction::mean ? 1.0 / double(n) : 1.0;

  const int workers = worker_count();
  std::vector<GradBuffers<Real>> buffers;
  if (with_grad)
    for (int w = 0; w < workers; ++w) buffers.emplace_back(store);
  std::vector<LossTotals> worker_losses(workers);
  std::vector<std::string> worker_errors(workers);

  parallel_for(n, [&](std::size_t begin, std::size_t end, int w) {
    FieldTrace<Real> tr;
    std::vector<double> pos;
    std::vector<Real> d_sigma, d_rgb;
    try {
      for (std::size_t r = begin; r < end; ++r) {
        const RayTask& task = batch[r];
        RenderResult<Real> res = render_ray(store, field_cfg, env, task.ray, task.samples, tr, pos);
        if (!std::isfinite(double(res.rgb[0])) || !std::isfinite(double(res.depth)) ||
            !std::isfinite(double(res.depth_std))) {
          std::string layer = find_nonfinite_layer(store, field_cfg, tr);
          throw std::runtime_error("forward_backward: non-finite render output" +
                                   (layer.empty() ? std::string() : " from layer " + layer));
        }
        double rgbd[3] = {double(res.rgb[0]), double(res.rgb[1]), double(res.rgb[2])};
        RayLoss rl = ray_loss(rgbd, task.target, double(res.depth), double(res.depth_std),
                              task.prior, loss_cfg);
        worker_losses[w].color += rl.color;
        worker_losses[w].depth += rl.depth;
        worker_losses[w].active_rays += rl.active ? 1 : 0;
        if (!with_grad) continue;

        const int ns = task.samples.size();
        d_sigma.assign(ns, Real(0));
        d_rgb.assign(std::size_t(ns) * 3, Real(0));
        Real d_out_rgb[3] = {Real(scale * rl.d_rgb[0]), Real(scale * rl.d_rgb[1]),
                             Real(scale * rl.d_rgb[2])};
        Real d_out_depth = Real(scale * loss_cfg.lambda * rl.d_depth);
        composite_backward(task.samples.t.data(), task.samples.delta.data(), ns, tr.sigma.data(),
                           tr.rgb.data(), res, d_out_rgb, d_out_depth, Real(0), d_sigma.data(),
                           d_rgb.data());
        field_backward(store, field_cfg, tr, d_sigma.data(), d_rgb.data(), buffers[w]);
      }
    } catch (const std::exception& e) {
      worker_errors[w] = e.what();
    }
  });

  for (auto& err : worker_errors)
    if (!err.empty()) throw std::runtime_error(err);

  LossTotals totals;
  for (auto& wl : worker_losses) {
    totals.color += wl.color;
    totals.depth += wl.depth;
    totals.active_rays += wl.active_rays;
  }
  totals.color *= scale;
  totals.depth *= scale;
  totals.total = totals.color + loss_cfg.lambda * totals.depth;
  if (with_grad)
    for (auto& b : buffers) b.add_into(store);
  if (!std::isfinite(totals.total)) throw std::runtime_error("forward_backward: non-finite loss");
  return totals;
}

}  // namespace spsnerf

#include "spsnerf/sgm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "spsnerf/threads.hpp"

namespace spsnerf {
namespace {

constexpr double kVarEps = 1e-12;

struct WindowStats {
  std::vector<double> mean, var;  // per pixel, window-averaged
  std::vector<std::uint8_t> inside;
};

WindowStats window_stats(const Raster& img, int window) {
  int r = window / 2;
  WindowStats s;
  std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  s.mean.assign(n, 0.0);
  s.var.assign(n, 0.0);
  s.inside.assign(n, 0);
  for (int y = r; y < img.height - r; ++y)
    for (int x = r; x < img.width - r; ++x) {
      double sum = 0.0, sum2 = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          double v = img.at(x + dx, y + dy);
          sum += v;
          sum2 += v * v;
        }
      double cnt = static_cast<double>(window) * window;
      std::size_t i = static_cast<std::size_t>(y) * img.width + x;
      s.mean[i] = sum / cnt;
      s.var[i] = std::max(0.0, sum2 / cnt - s.mean[i] * s.mean[i]);
      s.inside[i] = 1;
    }
  return s;
}

}  // namespace

void SgmParams::validate() const {
  if (window < 3 || window % 2 == 0) throw std::invalid_argument("sgm: window must be odd >= 3");
  if (p1 < 0 || p2 < p1) throw std::invalid_argument("sgm: need 0 <= p1 <= p2");
  if (n_dirs != 4 && n_dirs != 8) throw std::invalid_argument("sgm: n_dirs must be 4 or 8");
  if (factor < 1) throw std::invalid_argument("sgm: factor must be >= 1");
  if (lr_tol <= 0) throw std::invalid_argument("sgm: lr_tol must be positive");
}

CostVolume ncc_cost_volume(const Raster& ref, const Raster& aux, int window, int d_min,
                           int d_max) {
  if (ref.channels != 1 || aux.channels != 1)
    throw std::invalid_argument("ncc_cost_volume: expects single-channel images");
  if (ref.width != aux.width || ref.height != aux.height)
    throw std::invalid_argument("ncc_cost_volume: image sizes differ");
  if (d_min > d_max) throw std::invalid_argument("ncc_cost_volume: empty disparity range");
  if (window < 3 || window % 2 == 0)
    throw std::invalid_argument("ncc_cost_volume: window must be odd >= 3");

  CostVolume vol;
  vol.width = ref.width;
  vol.height = ref.height;
  vol.d_min = d_min;
  vol.d_max = d_max;
  vol.cost.assign(static_cast<std::size_t>(ref.width) * ref.height * vol.ndisp(), kInvalidCost);
  vol.mask.assign(static_cast<std::size_t>(ref.width) * ref.height, 0);

  const WindowStats rs = window_stats(ref, window);
  const WindowStats as = window_stats(aux, window);
  const int r = window / 2;
  const int nd = vol.ndisp();

  parallel_for(ref.height, [&](int y0, int y1, int) {
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < ref.width; ++x) {
        std::size_t pi = static_cast<std::size_t>(y) * ref.width + x;
        if (!rs.inside[pi]) continue;
        vol.mask[pi] = rs.var[pi] > kVarEps ? 1 : 0;
        for (int di = 0; di < nd; ++di) {
          int ax = x - (d_min + di);
          std::size_t ai = static_cast<std::size_t>(y) * ref.width + ax;
          if (ax < r || ax >= ref.width - r) continue;
          if (rs.var[pi] <= kVarEps || as.var[ai] <= kVarEps) {
            vol.at(x, y, di) = 1.0f;  // flat patch: no correlation evidence
            continue;
          }
          double cov = 0.0;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
              cov += (ref.at(x + dx, y + dy) - rs.mean[pi]) * (aux.at(ax + dx, y + dy) - as.mean[ai]);
          cov /= static_cast<double>(window) * window;
          double ncc = std::clamp(cov / std::sqrt(rs.var[pi] * as.var[ai]), -1.0, 1.0);
          vol.at(x, y, di) = static_cast<float>(1.0 - ncc);
        }
      }
    }
  });
  return vol;
}

CostVolume aggregate_costs(const CostVolume& raw, float p1, float p2, int n_dirs) {
  if (n_dirs != 4 && n_dirs != 8) throw std::invalid_argument("aggregate_costs: n_dirs 4 or 8");
  if (p1 < 0 || p2 < p1) throw std::invalid_argument("aggregate_costs: need 0 <= p1 <= p2");
  static const int dirs8[8][2] = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                                  {1, 1},  {-1, 1}, {1, -1}, {-1, -1}};
  CostVolume sum = raw;
  std::fill(sum.cost.begin(), sum.cost.end(), 0.0f);
  const int nd = raw.ndisp();
  const int W = raw.width, H = raw.height;
  std::vector<float> lr(raw.cost.size());

  for (int dir = 0; dir < n_dirs; ++dir) {
    int dx = dirs8[dir][0], dy = dirs8[dir][1];
    int ys = dy >= 0 ? 0 : H - 1, ye = dy >= 0 ? H : -1, ystep = dy >= 0 ? 1 : -1;
    int xs = dx >= 0 ? 0 : W - 1, xe = dx >= 0 ? W : -1, xstep = dx >= 0 ? 1 : -1;
    for (int y = ys; y != ye; y += ystep) {
      for (int x = xs; x != xe; x += xstep) {
        std::size_t base = (static_cast<std::size_t>(y) * W + x) * nd;
        int px = x - dx, py = y - dy;
        if (px < 0 || px >= W || py < 0 || py >= H) {
          for (int d = 0; d < nd; ++d) lr[base + d] = raw.cost[base + d];
          continue;
        }
        std::size_t pbase = (static_cast<std::size_t>(py) * W + px) * nd;
        float prev_min = lr[pbase];
        for (int d = 1; d < nd; ++d) prev_min = std::min(prev_min, lr[pbase + d]);
        for (int d = 0; d < nd; ++d) {
          float best = lr[pbase + d];
          if (d > 0) best = std::min(best, lr[pbase + d - 1] + p1);
          if (d + 1 < nd) best = std::min(best, lr[pbase + d + 1] + p1);
          best = std::min(best, prev_min + p2);
          lr[base + d] = raw.cost[base + d] + best - prev_min;
        }
      }
    }
    for (std::size_t i = 0; i < sum.cost.size(); ++i) sum.cost[i] += lr[i];
  }
  return sum;
}

DisparityMap winner_take_all(const CostVolume& aggregated, const CostVolume& raw) {
  if (aggregated.width != raw.width || aggregated.height != raw.height ||
      aggregated.d_min != raw.d_min || aggregated.d_max != raw.d_max)
    throw std::invalid_argument("winner_take_all: volume shapes differ");
  const int W = raw.width, H = raw.height, nd = raw.ndisp();
  DisparityMap map;
  map.disp = Raster(W, H, 1, 0.f);
  map.corr = Raster(W, H, 1, 0.f);
  map.valid = Raster(W, H, 1, 0.f);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      std::size_t pi = static_cast<std::size_t>(y) * W + x;
      if (!raw.mask[pi]) continue;
      int best = -1;
      float best_cost = std::numeric_limits<float>::infinity();
      for (int d = 0; d < nd; ++d) {
        if (raw.at(x, y, d) >= kInvalidCost) continue;
        float c = aggregated.at(x, y, d);
        if (c < best_cost) {
          best_cost = c;
          best = d;
        }
      }
      if (best < 0) continue;
      double offset = 0.0;
      if (best > 0 && best + 1 < nd && raw.at(x, y, best - 1) < kInvalidCost &&
          raw.at(x, y, best + 1) < kInvalidCost) {
        double cm = aggregated.at(x, y, best - 1);
        double c0 = best_cost;
        double cp = aggregated.at(x, y, best + 1);
        double denom = cm - 2.0 * c0 + cp;
        if (denom > 0) {
          offset = 0.5 * (cm - cp) / denom;
          if (!(std::abs(offset) < 0.5)) offset = 0.0;
        }
      }
      map.disp.at(x, y) = static_cast<float>(raw.d_min + best + offset);
      map.corr.at(x, y) = std::clamp(1.0f - raw.at(x, y, best), 0.0f, 1.0f);
      map.valid.at(x, y) = 1.0f;
    }
  return map;
}

void lr_consistency(DisparityMap& left, const DisparityMap& right, double tol) {
  const int W = left.disp.width, H = left.disp.height;
  if (right.disp.width != W || right.disp.height != H)
    throw std::invalid_argument("lr_consistency: map sizes differ");
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (left.valid.at(x, y) == 0.f) continue;
      double dl = left.disp.at(x, y);
      int ax = static_cast<int>(std::lround(x - dl));
      bool ok = ax >= 0 && ax < W && right.valid.at(ax, y) != 0.f &&
                std::abs(dl + right.disp.at(ax, y)) <= tol;
      if (!ok) {
        left.valid.at(x, y) = 0.f;
        left.corr.at(x, y) = 0.f;
      }
    }
}

std::pair<double, double> disparity_range(const Camera& ref_cam, const Camera& aux_cam,
                                          const SceneEnvelope& env) {
  Vec3 lo = env.lo(), hi = env.hi();
  double d_lo = std::numeric_limits<double>::max();
  double d_hi = std::numeric_limits<double>::lowest();
  for (int i = 0; i < 8; ++i) {
    Vec3 corner(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
    auto pr = world_to_pixel(ref_cam, corner);
    auto pa = world_to_pixel(aux_cam, corner);
    if (!pr || !pa) throw std::invalid_argument("disparity_range: envelope corner behind camera");
    if (std::abs(pr->y() - pa->y()) > 0.5)
      throw std::invalid_argument("disparity_range: cameras are not row-aligned");
    double d = pr->x() - pa->x();
    d_lo = std::min(d_lo, d);
    d_hi = std::max(d_hi, d);
  }
  return {d_lo, d_hi};
}

double triangulate_depth(const Camera& ref_cam, const Camera& aux_cam, const Vec2& ref_px,
                         const Vec2& aux_px) {
  auto ray_dir = [](const Camera& cam, const Vec2& px) {
    Vec3 dc((px.x() - cam.cx) / cam.focal, (px.y() - cam.cy) / cam.focal, 1.0);
    return Vec3(cam.R.transpose() * dc).normalized();
  };
  Vec3 d1 = ray_dir(ref_cam, ref_px), d2 = ray_dir(aux_cam, aux_px);
  Vec3 w0 = ref_cam.t - aux_cam.t;
  double b = d1.dot(d2);
  double d = d1.dot(w0), e = d2.dot(w0);
  double denom = 1.0 - b * b;
  if (denom < 1e-12) return -1.0;
  double t1 = (b * e - d) / denom;
  double t2 = (e - b * d) / denom;
  if (t1 <= 0 || t2 <= 0) return -1.0;
  Vec3 mid = 0.5 * ((ref_cam.t + t1 * d1) + (aux_cam.t + t2 * d2));
  double depth = (mid - ref_cam.t).dot(d1);
  return std::isfinite(depth) ? depth : -1.0;
}

PriorMaps stereo_depth_prior(const Raster& ref_img, const Camera& ref_cam, const Raster& aux_img,
                             const Camera& aux_cam, const SceneEnvelope& env,
                             const SgmParams& params) {
  params.validate();
  Raster ref_lo = downsample_box(to_gray(ref_img), params.factor);
  Raster aux_lo = downsample_box(to_gray(aux_img), params.factor);

  auto [d_lo, d_hi] = disparity_range(ref_cam, aux_cam, env);
  int d_min = static_cast<int>(std::floor(d_lo / params.factor)) - 2;
  int d_max = static_cast<int>(std::ceil(d_hi / params.factor)) + 2;

  CostVolume raw_l = ncc_cost_volume(ref_lo, aux_lo, params.window, d_min, d_max);
  CostVolume raw_r = ncc_cost_volume(aux_lo, ref_lo, params.window, -d_max, -d_min);
  CostVolume agg_l = aggregate_costs(raw_l, params.p1, params.p2, params.n_dirs);
  CostVolume agg_r = aggregate_costs(raw_r, params.p1, params.p2, params.n_dirs);
  DisparityMap left = winner_take_all(agg_l, raw_l);
  DisparityMap right = winner_take_all(agg_r, raw_r);
  lr_consistency(left, right, params.lr_tol);

  PriorMaps out;
  out.factor = params.factor;
  out.depth = Raster(ref_lo.width, ref_lo.height, 1, -1.f);
  out.corr = Raster(ref_lo.width, ref_lo.height, 1, 0.f);
  out.valid = Raster(ref_lo.width, ref_lo.height, 1, 0.f);
  for (int y = 0; y < ref_lo.height; ++y)
    for (int x = 0; x < ref_lo.width; ++x) {
      if (left.valid.at(x, y) == 0.f) continue;
      double u = (x + 0.5) * params.factor;
      double v = (y + 0.5) * params.factor;
      double ua = (x + 0.5 - left.disp.at(x, y)) * params.factor;
      double depth = triangulate_depth(ref_cam, aux_cam, Vec2(u, v), Vec2(ua, v));
      if (depth <= 0) continue;
      out.depth.at(x, y) = static_cast<float>(depth);
      out.corr.at(x, y) = left.corr.at(x, y);
      out.valid.at(x, y) = 1.f;
    }
  return out;
}

}  // namespace spsnerf

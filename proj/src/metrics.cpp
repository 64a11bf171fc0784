#include "spsnerf/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace spsnerf {
namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size) * size);
  int r = size / 2;
  double sum = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>(y + r) * size + (x + r)] = v;
      sum += v;
    }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

double psnr(const Raster& a, const Raster& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shapes differ");
  if (a.size() == 0) throw std::invalid_argument("psnr: empty raster");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Raster& a, const Raster& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("ssim: sizes differ");
  Raster ga = to_gray(a), gb = to_gray(b);
  const int size = 11, r = size / 2;
  if (ga.width < size || ga.height < size) throw std::invalid_argument("ssim: raster under 11x11");
  static const std::vector<double> kernel = gaussian_kernel(size, 1.5);
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  double total = 0.0;
  long count = 0;
  for (int y = r; y < ga.height - r; ++y)
    for (int x = r; x < ga.width - r; ++x) {
      double mu_a = 0, mu_b = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          double w = kernel[static_cast<std::size_t>(dy + r) * size + (dx + r)];
          mu_a += w * ga.at(x + dx, y + dy);
          mu_b += w * gb.at(x + dx, y + dy);
        }
      double va = 0, vb = 0, cov = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          double w = kernel[static_cast<std::size_t>(dy + r) * size + (dx + r)];
          double da = ga.at(x + dx, y + dy) - mu_a;
          double db = gb.at(x + dx, y + dy) - mu_b;
          va += w * da * da;
          vb += w * db * db;
          cov += w * da * db;
        }
      double s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
      total += s;
      ++count;
    }
  return total / count;
}

MaeSplit mae_split(const Raster& gt, const Raster& est, const Raster& valid) {
  if (!gt.same_shape(est)) throw std::invalid_argument("mae_split: gt/est shapes differ");
  if (gt.channels != 1 || valid.channels != 1 || valid.width != gt.width ||
      valid.height != gt.height)
    throw std::invalid_argument("mae_split: expects matching single-channel rasters");
  MaeSplit out;
  double sum_in = 0.0, sum_out = 0.0;
  for (int y = 0; y < gt.height; ++y)
    for (int x = 0; x < gt.width; ++x) {
      double err = std::abs(static_cast<double>(gt.at(x, y)) - est.at(x, y));
      if (valid.at(x, y) != 0.f) {
        sum_in += err;
        ++out.n_in;
      } else {
        sum_out += err;
        ++out.n_out;
      }
    }
  if (out.n_in > 0) out.mae_in = sum_in / out.n_in;
  if (out.n_out > 0) out.mae_out = sum_out / out.n_out;
  return out;
}

DsmGrid dsm_grid(const SceneEnvelope& env, double step) {
  if (step <= 0) throw std::invalid_argument("dsm_grid: step must be positive");
  DsmGrid g;
  g.x0 = env.box_min.x();
  g.y0 = env.box_min.y();
  g.step = step;
  g.nx = std::max(1, static_cast<int>(std::lround((env.box_max.x() - env.box_min.x()) / step)));
  g.ny = std::max(1, static_cast<int>(std::lround((env.box_max.y() - env.box_min.y()) / step)));
  return g;
}

Raster dsm_validity_mask(const DsmGrid& grid, const Raster& gt_height, const PriorMaps& prior,
                         const Camera& ref_cam) {
  if (gt_height.width != grid.nx || gt_height.height != grid.ny || gt_height.channels != 1)
    throw std::invalid_argument("dsm_validity_mask: height raster does not match grid");
  Raster mask(grid.nx, grid.ny, 1, 0.f);
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) {
      Vec3 p(grid.cx(i), grid.cy(j), gt_height.at(i, j));
      auto px = world_to_pixel(ref_cam, p);
      if (!px) continue;
      int lx = static_cast<int>(std::floor(px->x() / prior.factor));
      int ly = static_cast<int>(std::floor(px->y() / prior.factor));
      if (!prior.valid.in_bounds(lx, ly)) continue;
      mask.at(i, j) = prior.valid.at(lx, ly) != 0.f ? 1.f : 0.f;
    }
  return mask;
}

}  // namespace spsnerf

#include "spsnerf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "spsnerf/io.hpp"
#include "spsnerf/rng.hpp"
#include "spsnerf/threads.hpp"

namespace spsnerf {
namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Lattice value in [0,1), stable across platforms.
double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(ix) * 0x8da6b343u ^
                          mix64(static_cast<std::uint64_t>(iy) * 0xd8163841u ^ seed));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double quintic(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Smooth value noise in [0,1); coordinates are in lattice units.
double value_noise(double x, double y, std::uint64_t seed) {
  double fx = std::floor(x), fy = std::floor(y);
  auto ix = static_cast<std::int64_t>(fx);
  auto iy = static_cast<std::int64_t>(fy);
  double tx = quintic(x - fx), ty = quintic(y - fy);
  double v00 = lattice(ix, iy, seed), v10 = lattice(ix + 1, iy, seed);
  double v01 = lattice(ix, iy + 1, seed), v11 = lattice(ix + 1, iy + 1, seed);
  double a = v00 + (v10 - v00) * tx;
  double b = v01 + (v11 - v01) * tx;
  return a + (b - a) * ty;
}

// Fractal sum in [-1,1], base wavelength in meters.
double fbm(double x, double y, double wavelength, int octaves, std::uint64_t seed) {
  double sum = 0.0, amp = 1.0, norm = 0.0, freq = 1.0 / wavelength;
  for (int k = 0; k < octaves; ++k) {
    sum += amp * (2.0 * value_noise(x * freq, y * freq, seed + 131 * k) - 1.0);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / norm;
}

struct Box {
  double cx, cy, hx, hy, height;
  int id;
};

std::vector<Box> urban_boxes(double extent, std::uint64_t seed) {
  RayRng rng(seed ^ 0xb0c5ull);
  std::vector<Box> boxes;
  const int count = 6;
  for (int i = 0; i < count; ++i) {
    Box b;
    // One box pinned near the center so every stereo pair sees occlusions.
    if (i == 0) {
      b.cx = extent * 0.5 + (rng.uniform() - 0.5) * 8.0;
      b.cy = extent * 0.5 + (rng.uniform() - 0.5) * 8.0;
    } else {
      b.cx = 24.0 + rng.uniform() * (extent - 48.0);
      b.cy = 24.0 + rng.uniform() * (extent - 48.0);
    }
    b.hx = 5.0 + rng.uniform() * 5.0;
    b.hy = 5.0 + rng.uniform() * 5.0;
    b.height = 14.0 + rng.uniform() * 12.0;
    b.id = i;
    boxes.push_back(b);
  }
  return boxes;
}

void build_albedo(Heightfield& hf, SceneKind kind, const std::vector<Box>& boxes,
                  std::uint64_t seed) {
  int an = 4 * (hf.n - 1) + 1;
  hf.albedo = Raster(an, an, 3);
  hf.albedo_gsd = hf.extent() / (an - 1);
  for (int iy = 0; iy < an; ++iy) {
    for (int ix = 0; ix < an; ++ix) {
      double x = ix * hf.albedo_gsd, y = iy * hf.albedo_gsd;
      double macro = fbm(x, y, 25.0, 3, seed ^ 0xa1ull);
      double fine = fbm(x, y, 2.0, 3, seed ^ 0xa2ull);
      double r, g, b;
      if (kind == SceneKind::rural) {
        // Vegetation-like palette with strong fine-scale contrast.
        r = 0.30 + 0.14 * macro + 0.22 * fine;
        g = 0.42 + 0.16 * macro + 0.24 * fine;
        b = 0.24 + 0.10 * macro + 0.16 * fine;
      } else {
        double gray = 0.45 + 0.10 * macro + 0.24 * fine;
        r = gray;
        g = gray;
        b = gray * 0.96;
        for (const auto& box : boxes) {
          if (std::abs(x - box.cx) <= box.hx && std::abs(y - box.cy) <= box.hy) {
            double tr = lattice(box.id, 0, seed ^ 0xa3ull);
            double tg = lattice(box.id, 1, seed ^ 0xa3ull);
            double tb = lattice(box.id, 2, seed ^ 0xa3ull);
            r = 0.30 + 0.45 * tr + 0.18 * fine;
            g = 0.30 + 0.45 * tg + 0.18 * fine;
            b = 0.30 + 0.45 * tb + 0.18 * fine;
            break;
          }
        }
      }
      hf.albedo.at(ix, iy, 0) = static_cast<float>(std::clamp(r, 0.02, 0.98));
      hf.albedo.at(ix, iy, 1) = static_cast<float>(std::clamp(g, 0.02, 0.98));
      hf.albedo.at(ix, iy, 2) = static_cast<float>(std::clamp(b, 0.02, 0.98));
    }
  }
}

float clamped_z(const Heightfield& hf, std::int64_t ix, std::int64_t iy) {
  ix = std::clamp<std::int64_t>(ix, 0, hf.n - 1);
  iy = std::clamp<std::int64_t>(iy, 0, hf.n - 1);
  return hf.z[static_cast<std::size_t>(iy) * hf.n + ix];
}

}  // namespace

double Heightfield::z_at(double x, double y) const {
  double gx = x / gsd, gy = y / gsd;
  auto ix = static_cast<std::int64_t>(std::floor(gx));
  auto iy = static_cast<std::int64_t>(std::floor(gy));
  double tx = std::clamp(gx - ix, 0.0, 1.0), ty = std::clamp(gy - iy, 0.0, 1.0);
  double z00 = clamped_z(*this, ix, iy), z10 = clamped_z(*this, ix + 1, iy);
  double z01 = clamped_z(*this, ix, iy + 1), z11 = clamped_z(*this, ix + 1, iy + 1);
  double a = z00 + (z10 - z00) * tx;
  double b = z01 + (z11 - z01) * tx;
  return a + (b - a) * ty;
}

Vec3 Heightfield::normal_at(double x, double y) const {
  double gx = x / gsd, gy = y / gsd;
  auto ix = static_cast<std::int64_t>(std::floor(gx));
  auto iy = static_cast<std::int64_t>(std::floor(gy));
  double tx = std::clamp(gx - ix, 0.0, 1.0), ty = std::clamp(gy - iy, 0.0, 1.0);
  double z00 = clamped_z(*this, ix, iy), z10 = clamped_z(*this, ix + 1, iy);
  double z01 = clamped_z(*this, ix, iy + 1), z11 = clamped_z(*this, ix + 1, iy + 1);
  double dzdx = ((z10 - z00) * (1.0 - ty) + (z11 - z01) * ty) / gsd;
  double dzdy = ((z01 - z00) * (1.0 - tx) + (z11 - z10) * tx) / gsd;
  Vec3 n(-dzdx, -dzdy, 1.0);
  return n.normalized();
}

void Heightfield::albedo_at(double x, double y, float rgb[3]) const {
  double gx = std::clamp(x / albedo_gsd, 0.0, static_cast<double>(albedo.width - 1));
  double gy = std::clamp(y / albedo_gsd, 0.0, static_cast<double>(albedo.height - 1));
  int ix = std::min(static_cast<int>(gx), albedo.width - 2);
  int iy = std::min(static_cast<int>(gy), albedo.height - 2);
  double tx = gx - ix, ty = gy - iy;
  for (int c = 0; c < 3; ++c) {
    double a = albedo.at(ix, iy, c) + (albedo.at(ix + 1, iy, c) - albedo.at(ix, iy, c)) * tx;
    double b =
        albedo.at(ix, iy + 1, c) + (albedo.at(ix + 1, iy + 1, c) - albedo.at(ix, iy + 1, c)) * tx;
    rgb[c] = static_cast<float>(a + (b - a) * ty);
  }
}

float Heightfield::z_min() const { return *std::min_element(z.begin(), z.end()); }
float Heightfield::z_max() const { return *std::max_element(z.begin(), z.end()); }

Scene make_scene(SceneKind kind, int image_size, std::uint64_t seed) {
  if (image_size < 16) throw std::invalid_argument("make_scene: image_size too small");
  Scene scene;
  scene.kind = kind;
  scene.seed = seed;
  Heightfield& hf = scene.hf;
  hf.n = std::max(17, static_cast<int>(std::lround(image_size * 0.4)) + 1);
  hf.gsd = 125.0 / (hf.n - 1);
  hf.z.assign(static_cast<std::size_t>(hf.n) * hf.n, 0.0f);

  std::vector<Box> boxes;
  if (kind == SceneKind::rural) {
    // Smooth relief; rescale so the steepest lattice slope stays below 0.35.
    std::vector<double> raw(hf.z.size());
    for (int iy = 0; iy < hf.n; ++iy)
      for (int ix = 0; ix < hf.n; ++ix)
        raw[static_cast<std::size_t>(iy) * hf.n + ix] =
            9.0 * fbm(ix * hf.gsd, iy * hf.gsd, 60.0, 4, seed ^ 0x51ull);
    double max_slope = 0.0;
    for (int iy = 0; iy < hf.n; ++iy)
      for (int ix = 0; ix + 1 < hf.n; ++ix) {
        std::size_t i = static_cast<std::size_t>(iy) * hf.n + ix;
        max_slope = std::max(max_slope, std::abs(raw[i + 1] - raw[i]) / hf.gsd);
      }
    for (int iy = 0; iy + 1 < hf.n; ++iy)
      for (int ix = 0; ix < hf.n; ++ix) {
        std::size_t i = static_cast<std::size_t>(iy) * hf.n + ix;
        max_slope = std::max(max_slope, std::abs(raw[i + hf.n] - raw[i]) / hf.gsd);
      }
    double scale = max_slope > 0.35 ? 0.35 / max_slope : 1.0;
    double zmin = std::numeric_limits<double>::max();
    for (double& v : raw) zmin = std::min(zmin, v * scale);
    for (std::size_t i = 0; i < raw.size(); ++i)
      hf.z[i] = static_cast<float>(raw[i] * scale - zmin + 2.0);
  } else {
    boxes = urban_boxes(hf.extent(), seed);
    for (int iy = 0; iy < hf.n; ++iy)
      for (int ix = 0; ix < hf.n; ++ix) {
        double x = ix * hf.gsd, y = iy * hf.gsd;
        double base = 2.0 + 1.5 * (fbm(x, y, 70.0, 2, seed ^ 0x52ull) + 1.0) * 0.5;
        double z = base;
        for (const auto& b : boxes)
          if (std::abs(x - b.cx) <= b.hx && std::abs(y - b.cy) <= b.hy)
            z = std::max(z, 2.0 + 1.5 * 0.5 * (fbm(b.cx, b.cy, 70.0, 2, seed ^ 0x52ull) + 1.0) +
                                b.height);
        hf.z[static_cast<std::size_t>(iy) * hf.n + ix] = static_cast<float>(z);
      }
  }
  build_albedo(hf, kind, boxes, seed);

  scene.env.box_min = Vec3(0.0, 0.0, hf.z_min());
  scene.env.box_max = Vec3(hf.extent(), hf.extent(), hf.z_max());
  scene.env.margin = 5.0;
  scene.sun = Vec3(0.4, 0.25, 1.0).normalized();
  return scene;
}

std::optional<double> raycast(const Heightfield& hf, const Vec3& o, const Vec3& d) {
  const double g = hf.gsd;
  const double skirt = 512.0;
  Vec3 lo(-skirt, -skirt, hf.z_min() - 2.0);
  Vec3 hi(hf.extent() + skirt, hf.extent() + skirt, hf.z_max() + 2.0);
  auto span = ray_box(o, d, lo, hi);
  if (!span) return std::nullopt;
  double t = std::max(span->first, 0.0);
  const double t_exit = span->second;
  if (t_exit <= t) return std::nullopt;

  const double eps = 1e-12 * std::max(1.0, t_exit);
  int guard = 8 * static_cast<int>((hi.x() - lo.x()) / g + (hi.y() - lo.y()) / g) + 64;
  while (t < t_exit && guard-- > 0) {
    Vec3 p = o + t * d;
    auto ix = static_cast<std::int64_t>(std::floor(p.x() / g));
    auto iy = static_cast<std::int64_t>(std::floor(p.y() / g));
    double tx = std::numeric_limits<double>::infinity();
    double ty = std::numeric_limits<double>::infinity();
    if (d.x() > 0)
      tx = ((ix + 1) * g - o.x()) / d.x();
    else if (d.x() < 0)
      tx = (ix * g - o.x()) / d.x();
    if (d.y() > 0)
      ty = ((iy + 1) * g - o.y()) / d.y();
    else if (d.y() < 0)
      ty = (iy * g - o.y()) / d.y();
    double t_end = std::min({t_exit, tx, ty});
    if (t_end <= t) t_end = t + eps;

    double z00 = clamped_z(hf, ix, iy), z10 = clamped_z(hf, ix + 1, iy);
    double z01 = clamped_z(hf, ix, iy + 1), z11 = clamped_z(hf, ix + 1, iy + 1);
    double bu = z10 - z00, bv = z01 - z00, cc = z00 - z10 - z01 + z11;
    double u0 = p.x() / g - ix, v0 = p.y() / g - iy;
    double du = d.x() / g, dv = d.y() / g;
    // f(s) = height of the ray above the bilinear patch at parameter t + s.
    double zc0 = z00 + bu * u0 + bv * v0 + cc * u0 * v0;
    double zc1 = bu * du + bv * dv + cc * (u0 * dv + v0 * du);
    double zc2 = cc * du * dv;
    double a2 = -zc2, a1 = d.z() - zc1, a0 = p.z() - zc0;
    double dt = t_end - t;

    double s_hit = -1.0;
    if (a0 <= 0.0) {
      s_hit = 0.0;  // started at or below the surface
    } else if (std::abs(a2) < 1e-14) {
      if (a1 < 0.0) {
        double s = -a0 / a1;
        if (s >= 0.0 && s <= dt) s_hit = s;
      }
    } else {
      double disc = a1 * a1 - 4.0 * a2 * a0;
      if (disc >= 0.0) {
        double sq = std::sqrt(disc);
        double q = -0.5 * (a1 + std::copysign(sq, a1));
        double s1 = q / a2;
        double s2 = std::abs(q) > 0 ? a0 / q : std::numeric_limits<double>::infinity();
        if (s1 > s2) std::swap(s1, s2);
        if (s1 >= -1e-9 && s1 <= dt) s_hit = std::max(s1, 0.0);
        else if (s2 >= -1e-9 && s2 <= dt) s_hit = std::max(s2, 0.0);
      }
    }
    if (s_hit >= 0.0) return t + s_hit;
    t = t_end + eps;
  }
  return std::nullopt;
}

void oracle_render(const Scene& scene, const Camera& cam, Raster* rgb, Raster* depth) {
  if (rgb) *rgb = Raster(cam.width, cam.height, 3);
  if (depth) *depth = Raster(cam.width, cam.height, 1);
  const float bg[3] = {0.08f, 0.09f, 0.12f};
  parallel_for(cam.height, [&](int y0, int y1, int) {
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        Vec3 dir_cam((x + 0.5 - cam.cx) / cam.focal, (y + 0.5 - cam.cy) / cam.focal, 1.0);
        Vec3 d = (cam.R.transpose() * dir_cam).normalized();
        auto hit = raycast(scene.hf, cam.t, d);
        if (!hit) {
          if (rgb)
            for (int c = 0; c < 3; ++c) rgb->at(x, y, c) = bg[c];
          if (depth) depth->at(x, y, 0) = -1.0f;
          continue;
        }
        Vec3 p = cam.t + *hit * d;
        if (rgb) {
          float alb[3];
          scene.hf.albedo_at(p.x(), p.y(), alb);
          Vec3 n = scene.hf.normal_at(p.x(), p.y());
          double shade = 0.25 + 0.75 * std::max(0.0, n.dot(scene.sun));
          for (int c = 0; c < 3; ++c)
            rgb->at(x, y, c) = static_cast<float>(std::clamp(alb[c] * shade, 0.0, 1.0));
        }
        if (depth) depth->at(x, y, 0) = static_cast<float>(*hit);
      }
    }
  });
}

Camera rig_camera(const RigConfig& rig, const Scene& scene, double dx, double dy) {
  Camera cam;
  cam.width = rig.image_size;
  cam.height = rig.image_size;
  cam.focal = rig.focal();
  cam.cx = rig.image_size * 0.5;
  cam.cy = rig.image_size * 0.5;
  cam.R = nadir_rotation();
  double half = scene.hf.extent() * 0.5;
  cam.t = Vec3(half + dx, half + dy, rig.altitude);
  cam.validate();
  return cam;
}

std::vector<Camera> rig_train_cameras(const RigConfig& rig, const Scene& scene, int n_views) {
  if (n_views < 2) throw std::invalid_argument("rig_train_cameras: need at least 2 views");
  std::vector<Camera> cams;
  for (int i = 0; i < n_views; ++i) {
    double f = n_views == 1 ? 0.5 : static_cast<double>(i) / (n_views - 1);
    cams.push_back(rig_camera(rig, scene, (f - 0.5) * rig.baseline, 0.0));
  }
  return cams;
}

Camera rig_test_camera(const RigConfig& rig, const Scene& scene) {
  return rig_camera(rig, scene, 0.0, rig.test_dy);
}

void make_dataset(const Scene& scene, const RigConfig& rig, int n_views, double noise,
                  const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());

  auto cams = rig_train_cameras(rig, scene, n_views);
  cams.push_back(rig_test_camera(rig, scene));
  std::vector<std::string> names;
  for (int i = 0; i < n_views; ++i) names.push_back("v" + std::to_string(i));
  names.push_back("test");

  for (std::size_t i = 0; i < cams.size(); ++i) {
    Raster rgb, depth;
    oracle_render(scene, cams[i], &rgb, &depth);
    bool is_test = names[i] == "test";
    if (noise > 0 && !is_test) {
      RayRng rng(scene.seed ^ (0xf00d0000ull + i));
      for (float& v : rgb.data)
        v = static_cast<float>(std::clamp(v + noise * rng.normal(), 0.0, 1.0));
    }
    std::string base = out_dir + "/" + names[i];
    write_png(base + ".png", rgb);
    write_camera(base + ".cam", cams[i]);
    write_flt(base + "_gtdepth.flt", depth);
  }

  Raster hfz(scene.hf.n, scene.hf.n, 1);
  hfz.data = scene.hf.z;
  write_flt(out_dir + "/scene.flt", hfz);

  std::vector<std::pair<std::string, std::string>> kv;
  auto fmt = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  kv.emplace_back("kind", scene.kind == SceneKind::urban ? "urban" : "rural");
  kv.emplace_back("seed", std::to_string(scene.seed));
  kv.emplace_back("image_size", std::to_string(rig.image_size));
  kv.emplace_back("noise", fmt(noise));
  kv.emplace_back("hf_n", std::to_string(scene.hf.n));
  kv.emplace_back("hf_gsd", fmt(scene.hf.gsd));
  kv.emplace_back("env_min_x", fmt(scene.env.box_min.x()));
  kv.emplace_back("env_min_y", fmt(scene.env.box_min.y()));
  kv.emplace_back("env_min_z", fmt(scene.env.box_min.z()));
  kv.emplace_back("env_max_x", fmt(scene.env.box_max.x()));
  kv.emplace_back("env_max_y", fmt(scene.env.box_max.y()));
  kv.emplace_back("env_max_z", fmt(scene.env.box_max.z()));
  kv.emplace_back("env_margin", fmt(scene.env.margin));
  kv.emplace_back("sun_x", fmt(scene.sun.x()));
  kv.emplace_back("sun_y", fmt(scene.sun.y()));
  kv.emplace_back("sun_z", fmt(scene.sun.z()));
  kv.emplace_back("n_train", std::to_string(n_views));
  for (int i = 0; i < n_views; ++i) kv.emplace_back("train" + std::to_string(i), names[i]);
  kv.emplace_back("test", "test");
  write_kv(out_dir + "/manifest.txt", kv);
}

}  // namespace spsnerf

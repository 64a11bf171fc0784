#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spsnerf/geometry.hpp"
#include "spsnerf/raster.hpp"

namespace spsnerf {

// Terrain as an n x n lattice of elevations with bilinear interpolation
// between lattice points; extent is (n-1)*gsd meters with origin at (0,0).
// Queries outside the extent clamp to the border (flat skirt), so downward
// rays always find a surface.
struct Heightfield {
  int n = 0;
  double gsd = 1.0;
  std::vector<float> z;    // row-major, z[iy * n + ix]
  Raster albedo;           // RGB texture over the same extent
  double albedo_gsd = 1.0;

  double extent() const { return (n - 1) * gsd; }
  double z_at(double x, double y) const;          // bilinear, clamped
  Vec3 normal_at(double x, double y) const;       // upward unit normal
  void albedo_at(double x, double y, float rgb[3]) const;
  float z_min() const;
  float z_max() const;
};

enum class SceneKind { urban, rural };

struct Scene {
  Heightfield hf;
  SceneEnvelope env;
  Vec3 sun = Vec3(0, 0, 1);  // direction toward the light
  SceneKind kind = SceneKind::urban;
  std::uint64_t seed = 0;
};

// Deterministic synthetic scene. 'urban' is boxes on a gently undulating
// plane (guaranteed to contain elevation discontinuities above 5 m); 'rural'
// is smooth fractal relief with a bounded slope. image_size scales the
// heightfield resolution; the metric footprint stays fixed.
Scene make_scene(SceneKind kind, int image_size, std::uint64_t seed);

// First terrain hit along a ray; exact per-cell quadratic against the
// bilinear surface, refined under 1e-4 m. nullopt when the ray escapes.
std::optional<double> raycast(const Heightfield& hf, const Vec3& o, const Vec3& d);

// Lambertian render with a constant ambient floor; depth gets the metric ray
// parameter at the hit, misses get background color and depth -1.
void oracle_render(const Scene& scene, const Camera& cam, Raster* rgb, Raster* depth);

// Camera rig: every view uses the same nadir rotation and sits at the same
// altitude, displaced along world x (plus a y offset for the held-out view),
// so any pair of views is row-aligned for stereo matching.
struct RigConfig {
  int image_size = 256;
  double focal_scale = 200.0 / 256.0;  // focal = focal_scale * image_size
  double altitude = 200.0;             // camera z, world meters
  double baseline = 70.0;              // between outer train views
  double test_dy = 12.0;               // y offset of the held-out view

  double focal() const { return focal_scale * image_size; }
};

Camera rig_camera(const RigConfig& rig, const Scene& scene, double dx, double dy);
std::vector<Camera> rig_train_cameras(const RigConfig& rig, const Scene& scene, int n_views);
Camera rig_test_camera(const RigConfig& rig, const Scene& scene);

// Renders every view and writes the working-directory layout consumed by the
// rest of the pipeline: per view {name}.png / {name}.cam / {name}_gtdepth.flt,
// plus scene.flt (heights) and manifest.txt. Gaussian pixel noise (stddev in
// [0,1] units) lands on the training images only.
void make_dataset(const Scene& scene, const RigConfig& rig, int n_views, double noise,
                  const std::string& out_dir);

}  // namespace spsnerf

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>

namespace spsnerf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Axis-aligned sampling bounds in world meters. The margin pads z on both
// sides (relief safety); lo()/hi() are the effective bounds everywhere else.
struct SceneEnvelope {
  Vec3 box_min = Vec3::Zero();
  Vec3 box_max = Vec3::Ones();
  double margin = 0.0;

  Vec3 lo() const { return {box_min.x(), box_min.y(), box_min.z() - margin}; }
  Vec3 hi() const { return {box_max.x(), box_max.y(), box_max.z() + margin}; }
  bool contains(const Vec3& p) const {
    Vec3 a = lo(), b = hi();
    return p.x() >= a.x() && p.x() <= b.x() && p.y() >= a.y() && p.y() <= b.y() &&
           p.z() >= a.z() && p.z() <= b.z();
  }
};

// Pinhole camera. R maps world to camera coordinates (camera frame: x right,
// y down, z forward along the principal axis); t is the camera center in
// world meters. Pixel positions are continuous: pixel (i, j) has its center
// at (i + 0.5, j + 0.5), and the principal point (cx, cy) uses the same
// coordinates.
struct Camera {
  double focal = 1.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  // Throws std::invalid_argument on non-orthonormal R, non-positive focal,
  // or a principal point outside the image.
  void validate() const;
};

// Rotation of a camera looking straight down -z with image x along world +x.
Mat3 nadir_rotation();

struct Ray {
  Vec3 o;              // origin (camera center), world meters
  Vec3 d;              // unit direction
  double t_near = 0.0; // metric range covered by the envelope, 0 < t_near < t_far
  double t_far = 0.0;
};

// Slab intersection; returns (t_entry, t_exit) which may be negative, or
// nullopt when the ray misses the box.
std::optional<std::pair<double, double>> ray_box(const Vec3& o, const Vec3& d,
                                                 const Vec3& lo, const Vec3& hi);

// Ray through a continuous pixel position with [t_near, t_far] clipped to the
// envelope. nullopt when the ray misses the envelope or the envelope lies
// behind the camera.
std::optional<Ray> pixel_ray(const Camera& cam, const Vec2& px, const SceneEnvelope& env);

// Continuous pixel position of a world point; nullopt for points on or behind
// the camera plane. The result may fall outside the image bounds.
std::optional<Vec2> world_to_pixel(const Camera& cam, const Vec3& x);

}  // namespace spsnerf

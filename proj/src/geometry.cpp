#include "spsnerf/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace spsnerf {

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("Camera: non-positive image size");
  if (!(focal > 0.0)) throw std::invalid_argument("Camera: non-positive focal length");
  if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height))
    throw std::invalid_argument("Camera: principal point outside image");
  if ((R * R.transpose() - Mat3::Identity()).norm() > 1e-9)
    throw std::invalid_argument("Camera: rotation is not orthonormal");
  if (R.determinant() < 0.0) throw std::invalid_argument("Camera: rotation is a reflection");
}

Mat3 nadir_rotation() {
  Mat3 r;
  r << 1, 0, 0,
       0, -1, 0,
       0, 0, -1;
  return r;
}

std::optional<std::pair<double, double>> ray_box(const Vec3& o, const Vec3& d,
                                                 const Vec3& lo, const Vec3& hi) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double inv = 1.0 / d[a];
    double ta = (lo[a] - o[a]) * inv;
    double tb = (hi[a] - o[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) t0 = ta;
    if (tb < t1) t1 = tb;
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

std::optional<Ray> pixel_ray(const Camera& cam, const Vec2& px, const SceneEnvelope& env) {
  Vec3 dir_cam((px.x() - cam.cx) / cam.focal, (px.y() - cam.cy) / cam.focal, 1.0);
  Ray ray;
  ray.o = cam.t;
  ray.d = (cam.R.transpose() * dir_cam).normalized();
  auto hit = ray_box(ray.o, ray.d, env.lo(), env.hi());
  if (!hit) return std::nullopt;
  if (hit->second <= 0.0) return std::nullopt;  // envelope entirely behind the camera
  ray.t_near = hit->first > 0.0 ? hit->first : 1e-9;
  ray.t_far = hit->second;
  if (ray.t_near >= ray.t_far) return std::nullopt;
  return ray;
}

std::optional<Vec2> world_to_pixel(const Camera& cam, const Vec3& x) {
  Vec3 xc = cam.R * (x - cam.t);
  if (xc.z() <= 0.0) return std::nullopt;
  return Vec2(cam.focal * xc.x() / xc.z() + cam.cx, cam.focal * xc.y() / xc.z() + cam.cy);
}

}  // namespace spsnerf

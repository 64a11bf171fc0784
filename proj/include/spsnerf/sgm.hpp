#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "spsnerf/geometry.hpp"
#include "spsnerf/raster.hpp"

namespace spsnerf {

struct SgmParams {
  int window = 7;       // odd NCC window size
  float p1 = 0.03f;     // penalty for +-1 disparity change
  float p2 = 0.3f;      // penalty for larger jumps
  int n_dirs = 8;       // 4 or 8 aggregation paths
  int factor = 4;       // matching happens at 1/factor resolution
  double lr_tol = 1.0;  // left-right agreement tolerance, disparities

  void validate() const;
};

// Matching cost per (pixel, disparity): 1 - NCC, so 0 is a perfect match and
// 2 the worst. Disparity d pairs ref pixel x with aux pixel x - d. Slots where
// either window leaves the image carry kInvalidCost and the pixel mask marks
// ref pixels whose own window is degenerate (border or zero variance).
struct CostVolume {
  int width = 0, height = 0;
  int d_min = 0, d_max = 0;
  std::vector<float> cost;         // [y][x][d - d_min]
  std::vector<std::uint8_t> mask;  // [y][x], 1 = usable ref pixel

  int ndisp() const { return d_max - d_min + 1; }
  float& at(int x, int y, int di) {
    return cost[(static_cast<std::size_t>(y) * width + x) * ndisp() + di];
  }
  float at(int x, int y, int di) const {
    return cost[(static_cast<std::size_t>(y) * width + x) * ndisp() + di];
  }
};

inline constexpr float kInvalidCost = 3.0f;

CostVolume ncc_cost_volume(const Raster& ref, const Raster& aux, int window, int d_min, int d_max);

// Semi-global smoothing: sums the classic per-direction DP over n_dirs paths.
CostVolume aggregate_costs(const CostVolume& raw, float p1, float p2, int n_dirs);

// disp: winner disparity with parabolic subpixel offset in (-0.5, 0.5);
// corr: NCC of the integer winner taken from the raw volume, clamped to [0,1];
// valid: 1 where a usable winner exists.
struct DisparityMap {
  Raster disp, corr, valid;
};

DisparityMap winner_take_all(const CostVolume& aggregated, const CostVolume& raw);

// Invalidates left pixels whose match is missing or disagrees by more than
// tol disparities when checked from the right image.
void lr_consistency(DisparityMap& left, const DisparityMap& right, double tol);

// Full-resolution disparity range (in ref pixels) that covers the envelope,
// derived by projecting its corners into both cameras. Throws when the pair
// is not row-aligned to within half a pixel.
std::pair<double, double> disparity_range(const Camera& ref_cam, const Camera& aux_cam,
                                          const SceneEnvelope& env);

// Depth of the midpoint of closest approach between the two pixel rays,
// measured along the ref ray; negative or non-finite results mean failure.
double triangulate_depth(const Camera& ref_cam, const Camera& aux_cam, const Vec2& ref_px,
                         const Vec2& aux_px);

// Low-resolution depth prior for the ref view: depth/corr/valid rasters at
// 1/factor resolution. Invalid pixels carry depth -1 and corr 0.
struct PriorMaps {
  Raster depth, corr, valid;
  int factor = 1;
};

PriorMaps stereo_depth_prior(const Raster& ref_img, const Camera& ref_cam, const Raster& aux_img,
                             const Camera& aux_cam, const SceneEnvelope& env,
                             const SgmParams& params);

}  // namespace spsnerf

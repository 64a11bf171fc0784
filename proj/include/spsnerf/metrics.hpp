#pragma once

#include "spsnerf/geometry.hpp"
#include "spsnerf/raster.hpp"
#include "spsnerf/sgm.hpp"

namespace spsnerf {

// Peak signal-to-noise ratio for [0,1] rasters, capped at 99 dB (identical
// inputs would otherwise be infinite).
double psnr(const Raster& a, const Raster& b);

// Mean structural similarity over all fully supported 11x11 Gaussian windows
// (sigma 1.5); color inputs are reduced to luminance first.
double ssim(const Raster& a, const Raster& b);

struct MaeSplit {
  double mae_in = -1.0;  // -1 when the side has no pixels
  double mae_out = -1.0;
  long n_in = 0;
  long n_out = 0;
};

// Mean absolute error split by a 0/1 validity mask: `in` covers mask!=0.
MaeSplit mae_split(const Raster& gt, const Raster& est, const Raster& valid);

// Ground raster covering the envelope footprint; cell (i,j) is centered at
// (x0 + (i+0.5)*step, y0 + (j+0.5)*step).
struct DsmGrid {
  int nx = 0, ny = 0;
  double x0 = 0, y0 = 0, step = 1;

  double cx(int i) const { return x0 + (i + 0.5) * step; }
  double cy(int j) const { return y0 + (j + 0.5) * step; }
};

DsmGrid dsm_grid(const SceneEnvelope& env, double step);

// Marks DSM cells whose projection into the matcher's reference view lands on
// a valid prior pixel. gt_height supplies the elevation used for projection.
Raster dsm_validity_mask(const DsmGrid& grid, const Raster& gt_height, const PriorMaps& prior,
                         const Camera& ref_cam);

}  // namespace spsnerf

#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace spsnerf {

// Dense float grid, row-major, channel-interleaved. Used for images (values
// in [0,1]), depth/disparity maps (meters or pixels), and 0/1 validity masks.
struct Raster {
  int width = 0, height = 0, channels = 0;
  std::vector<float> data;

  Raster() = default;
  Raster(int w, int h, int c, float fill = 0.f)
      : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || c <= 0) throw std::invalid_argument("Raster: non-positive shape");
  }

  float& at(int x, int y, int c = 0) {
    return data[(std::size_t(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return data[(std::size_t(y) * width + x) * channels + c];
  }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  bool same_shape(const Raster& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  std::size_t size() const { return data.size(); }
};

inline float luminance(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

// Box average over factor x factor blocks; right/bottom edges replicate when
// the size is not an exact multiple.
inline Raster downsample_box(const Raster& img, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample_box: factor must be >= 1");
  if (factor == 1) return img;
  int w = (img.width + factor - 1) / factor;
  int h = (img.height + factor - 1) / factor;
  Raster out(w, h, img.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double sum = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) {
            int sx = std::min(x * factor + dx, img.width - 1);
            int sy = std::min(y * factor + dy, img.height - 1);
            sum += img.at(sx, sy, c);
          }
        out.at(x, y, c) = static_cast<float>(sum / (factor * factor));
      }
  return out;
}

// 3-channel image -> single-channel luminance; 1-channel input passes through.
inline Raster to_gray(const Raster& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw std::invalid_argument("to_gray: expected 1 or 3 channels");
  Raster out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(x, y) = luminance(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
  return out;
}

}  // namespace spsnerf

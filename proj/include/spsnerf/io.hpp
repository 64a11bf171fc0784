#pragma once

#include <map>
#include <string>
#include <vector>

#include "spsnerf/geometry.hpp"
#include "spsnerf/params.hpp"
#include "spsnerf/raster.hpp"

namespace spsnerf {

// I/O failures (missing files, malformed headers) carry this type so the CLI
// can map them to their own exit code.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// FLT raster container: "FLT1" magic, u32 LE width/height/channels, then
// float32 LE row-major channel-interleaved samples. Writing rejects NaN/Inf.
void write_flt(const std::string& path, const Raster& r);
Raster read_flt(const std::string& path);

// 8-bit PNG round-trip, [0,1] floats clamped and quantized with rounding.
void write_png(const std::string& path, const Raster& img);
Raster read_png(const std::string& path);

// Plain-text camera file: focal, cx, cy, width, height, r00..r22 (row-major
// world-to-camera rotation), tx, ty, tz (camera center, world meters).
void write_camera(const std::string& path, const Camera& cam);
Camera read_camera(const std::string& path);

// key=value lines; '#' starts a comment; keys keep file order.
std::vector<std::pair<std::string, std::string>> read_kv(const std::string& path);
void write_kv(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv);

// Checkpoint: "SPSC" magic, u32 version, then a stream of named float32
// arrays (u32 name length, name bytes, u32 ndim, u32 dims, payload).
// Parameter arrays are followed by their Adam moments as adam.m.<name> /
// adam.v.<name>; scalar run state travels in meta.* arrays.
struct Checkpoint {
  ParamStore store;
  std::map<std::string, std::vector<float>> meta;
};
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::vector<float>>& meta);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace spsnerf

#include "spsnerf/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace spsnerf {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& ctx) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError(ctx + ": truncated file");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

void write_f32(std::ostream& out, const float* data, std::size_t n) {
  static_assert(sizeof(float) == 4);
  // this code targets little-endian hosts; the on-disk layout is LE
  out.write(reinterpret_cast<const char*>(data), std::streamsize(n * 4));
}

void read_f32(std::istream& in, float* data, std::size_t n, const std::string& ctx) {
  if (!in.read(reinterpret_cast<char*>(data), std::streamsize(n * 4)))
    throw IoError(ctx + ": truncated float payload");
}

}  // namespace

void write_flt(const std::string& path, const Raster& r) {
  if (r.width <= 0 || r.height <= 0 || r.channels <= 0)
    throw IoError("write_flt: empty raster for " + path);
  for (float v : r.data)
    if (!std::isfinite(v)) throw IoError("write_flt: non-finite sample writing " + path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_flt: cannot open " + path);
  out.write("FLT1", 4);
  write_u32(out, std::uint32_t(r.width));
  write_u32(out, std::uint32_t(r.height));
  write_u32(out, std::uint32_t(r.channels));
  write_f32(out, r.data.data(), r.data.size());
  if (!out) throw IoError("write_flt: short write to " + path);
}

Raster read_flt(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_flt: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "FLT1", 4) != 0)
    throw IoError("read_flt: bad magic in " + path);
  std::uint32_t w = read_u32(in, path), h = read_u32(in, path), c = read_u32(in, path);
  if (w == 0 || h == 0 || c == 0 || std::uint64_t(w) * h * c > (1u << 30))
    throw IoError("read_flt: implausible shape in " + path);
  Raster r(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  read_f32(in, r.data.data(), r.data.size(), path);
  return r;
}

void write_png(const std::string& path, const Raster& img) {
  if (img.channels != 1 && img.channels != 3)
    throw IoError("write_png: expected 1 or 3 channels for " + path);
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("write_png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("write_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(std::size_t(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        float v = img.at(x, y, c);
        v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
        row[std::size_t(x) * img.channels + c] = (unsigned char)std::lround(v * 255.0f);
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Raster read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("read_png: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("read_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = int(png_get_image_width(png, info));
  const int h = int(png_get_image_height(png, info));
  const int c = int(png_get_channels(png, info));
  if (c != 1 && c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("read_png: unsupported channel count in " + path);
  }
  Raster img(w, h, c);
  std::vector<unsigned char> row(std::size_t(w) * c);
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) img.at(x, y, k) = float(row[std::size_t(x) * c + k]) / 255.0f;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

void write_camera(const std::string& path, const Camera& cam) {
  std::ofstream out(path);
  if (!out) throw IoError("write_camera: cannot open " + path);
  out.precision(17);
  out << "focal=" << cam.focal << "\ncx=" << cam.cx << "\ncy=" << cam.cy
      << "\nwidth=" << cam.width << "\nheight=" << cam.height << "\n";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << "r" << r << c << "=" << cam.R(r, c) << "\n";
  out << "tx=" << cam.t.x() << "\nty=" << cam.t.y() << "\ntz=" << cam.t.z() << "\n";
  if (!out) throw IoError("write_camera: short write to " + path);
}

Camera read_camera(const std::string& path) {
  auto kv = read_kv(path);
  std::map<std::string, double> m;
  for (auto& [k, v] : kv) {
    try {
      m[k] = std::stod(v);
    } catch (...) {
      throw IoError("read_camera: bad number for key " + k + " in " + path);
    }
  }
  auto need = [&](const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) throw IoError("read_camera: missing key " + k + " in " + path);
    return it->second;
  };
  Camera cam;
  cam.focal = need("focal");
  cam.cx = need("cx");
  cam.cy = need("cy");
  cam.width = int(need("width"));
  cam.height = int(need("height"));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      cam.R(r, c) = need("r" + std::to_string(r) + std::to_string(c));
  cam.t = Vec3(need("tx"), need("ty"), need("tz"));
  cam.validate();
  return cam;
}

std::vector<std::pair<std::string, std::string>> read_kv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_kv: cannot open " + path);
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("read_kv: missing '=' at " + path + ":" + std::to_string(lineno));
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw IoError("read_kv: empty key at " + path + ":" + std::to_string(lineno));
    kv.emplace_back(key, val);
  }
  return kv;
}

void write_kv(const std::string& path,
              const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path);
  if (!out) throw IoError("write_kv: cannot open " + path);
  for (auto& [k, v] : kv) out << k << "=" << v << "\n";
  if (!out) throw IoError("write_kv: short write to " + path);
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void write_array(std::ostream& out, const std::string& name,
                 const std::vector<std::uint32_t>& shape, const float* data, std::size_t n) {
  write_u32(out, std::uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  write_u32(out, std::uint32_t(shape.size()));
  for (auto d : shape) write_u32(out, d);
  write_f32(out, data, n);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::vector<float>>& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out.write("SPSC", 4);
  write_u32(out, kCheckpointVersion);
  for (auto& a : store.arrays) {
    write_array(out, a.name, a.shape, a.value.data(), a.size());
    write_array(out, "adam.m." + a.name, a.shape, a.m1.data(), a.size());
    write_array(out, "adam.v." + a.name, a.shape, a.m2.data(), a.size());
  }
  {
    std::vector<float> step = {float(store.step)};
    write_array(out, "meta.step", {1}, step.data(), 1);
  }
  for (auto& [name, values] : meta)
    write_array(out, name, {std::uint32_t(values.size())}, values.data(), values.size());
  if (!out) throw IoError("save_checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SPSC", 4) != 0)
    throw IoError("load_checkpoint: bad magic in " + path);
  std::uint32_t version = read_u32(in, path);
  if (version != kCheckpointVersion)
    throw IoError("load_checkpoint: unsupported version in " + path);
  Checkpoint ck;
  while (true) {
    if (in.peek() == std::char_traits<char>::eof()) break;
    std::uint32_t name_len = read_u32(in, path);
    if (name_len == 0 || name_len > 4096) throw IoError("load_checkpoint: bad name in " + path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError("load_checkpoint: truncated " + path);
    std::uint32_t ndim = read_u32(in, path);
    if (ndim > 8) throw IoError("load_checkpoint: bad rank in " + path);
    std::vector<std::uint32_t> shape(ndim);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = read_u32(in, path);
      n *= d;
    }
    std::vector<float> payload(n);
    read_f32(in, payload.data(), n, path);
    if (name.rfind("adam.m.", 0) == 0) {
      ck.store.at(name.substr(7)).m1 = std::move(payload);
    } else if (name.rfind("adam.v.", 0) == 0) {
      ck.store.at(name.substr(7)).m2 = std::move(payload);
    } else if (name == "meta.step") {
      ck.store.step = std::int64_t(std::llround(double(payload.at(0))));
      ck.meta[name] = std::move(payload);
    } else if (name.rfind("meta.", 0) == 0) {
      ck.meta[name] = std::move(payload);
    } else {
      auto& a = ck.store.add(name, shape);
      a.value = std::move(payload);
    }
  }
  return ck;
}

}  // namespace spsnerf

#include "skelpose/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <png.h>

#include "skelpose/error.hpp"
#include "skelpose/rng.hpp"

namespace skelpose {

void validate(const MapConfig& config) {
  if (!(config.crop_scale > 0.0) || !std::isfinite(config.crop_scale)) {
    throw DomainError("crop_scale must be positive");
  }
  if (config.stick_width < kMinStickWidth || config.stick_width > kMaxStickWidth) {
    throw DomainError("stick_width must lie in [5, 15], got " + std::to_string(config.stick_width));
  }
  if (config.canvas_size < kMinCanvasSize) {
    throw DomainError("canvas_size must be at least 16, got " + std::to_string(config.canvas_size));
  }
}

nlohmann::json config_to_json(const MapConfig& config) {
  return {{"crop_scale", config.crop_scale},
          {"stick_width", config.stick_width},
          {"canvas_size", config.canvas_size}};
}

MapConfig config_from_json(const nlohmann::json& j) {
  MapConfig c;
  try {
    c.crop_scale = j.at("crop_scale").get<double>();
    c.stick_width = j.at("stick_width").get<int>();
    c.canvas_size = j.value("canvas_size", 56);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("map config: ") + e.what());
  }
  validate(c);
  return c;
}

std::string config_tag(const MapConfig& config) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "c%.2f_l%d", config.crop_scale, config.stick_width);
  return buf;
}

double stick_depth_at(const Stick& stick, Vec2 q, double half_width) {
  const double dx = stick.b.u - stick.a.u;
  const double dy = stick.b.v - stick.a.v;
  const double len2 = dx * dx + dy * dy;
  const double qx = q.u - stick.a.u;
  const double qy = q.v - stick.a.v;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp((qx * dx + qy * dy) / len2, 0.0, 1.0);
  const double ex = qx - t * dx;
  const double ey = qy - t * dy;
  if (ex * ex + ey * ey > half_width * half_width) return -1.0;
  return (1.0 - t) * stick.depth_a + t * stick.depth_b;
}

namespace {

SkeletonMapPair blank_pair(const MapConfig& config) {
  validate(config);
  const size_t n = 3 * static_cast<size_t>(config.canvas_size) * config.canvas_size;
  return {config, std::vector<float>(n, 0.0f), std::vector<float>(n, 0.0f)};
}

void paint(std::vector<float>& layer, int size, int y, int x, const Rgb& c) {
  const size_t plane = static_cast<size_t>(size) * size;
  const size_t at = static_cast<size_t>(y) * size + x;
  layer[at] = static_cast<float>(c.r);
  layer[plane + at] = static_cast<float>(c.g);
  layer[2 * plane + at] = static_cast<float>(c.b);
}

void check_palette(std::span<const Stick> sticks, std::span<const Rgb> palette) {
  for (const Stick& s : sticks) {
    if (s.bone < 0 || static_cast<size_t>(s.bone) >= palette.size()) {
      throw DomainError("stick bone index has no palette entry");
    }
  }
}

}  // namespace

SkeletonMapPair rasterize_reference(std::span<const Stick> sticks, std::span<const Rgb> palette,
                                    const MapConfig& config) {
  check_palette(sticks, palette);
  SkeletonMapPair out = blank_pair(config);
  const int size = config.canvas_size;
  const double hw = 0.5 * config.stick_width;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Vec2 q{x + 0.5, y + 0.5};
      int near = -1, far = -1;
      double near_depth = 0.0, far_depth = 0.0;
      for (size_t i = 0; i < sticks.size(); ++i) {
        const double d = stick_depth_at(sticks[i], q, hw);
        if (d < 0.0) continue;
        if (near < 0 || d < near_depth) {
          near = static_cast<int>(i);
          near_depth = d;
        }
        if (far < 0 || d > far_depth) {
          far = static_cast<int>(i);
          far_depth = d;
        }
      }
      if (near >= 0) {
        paint(out.fore, size, y, x, palette[sticks[near].bone]);
        paint(out.back, size, y, x, palette[sticks[far].bone]);
      }
    }
  }
  return out;
}

SkeletonMapPair rasterize(std::span<const Stick> sticks, std::span<const Rgb> palette,
                          const MapConfig& config) {
  check_palette(sticks, palette);
  SkeletonMapPair out = blank_pair(config);
  const int size = config.canvas_size;
  const double hw = 0.5 * config.stick_width;

  struct Extent {
    int x0, x1, y0, y1;
  };
  std::vector<Extent> extents(sticks.size());
  for (size_t i = 0; i < sticks.size(); ++i) {
    const Stick& s = sticks[i];
    // One pixel of slack beyond the capsule's box; the coverage test decides.
    const double lo_u = std::min(s.a.u, s.b.u) - hw - 1.5;
    const double hi_u = std::max(s.a.u, s.b.u) + hw + 0.5;
    const double lo_v = std::min(s.a.v, s.b.v) - hw - 1.5;
    const double hi_v = std::max(s.a.v, s.b.v) + hw + 0.5;
    auto clamp_px = [size](double v) {
      if (!(v > -1.0)) return -1;
      if (v > size) return size;
      return static_cast<int>(std::floor(v));
    };
    extents[i] = {std::max(0, clamp_px(lo_u)), std::min(size - 1, clamp_px(hi_u)),
                  std::max(0, clamp_px(lo_v)), std::min(size - 1, clamp_px(hi_v))};
  }

#pragma omp parallel for schedule(static)
  for (int y = 0; y < size; ++y) {
    std::vector<int> near(size, -1), far(size, -1);
    std::vector<double> near_depth(size, 0.0), far_depth(size, 0.0);
    for (size_t i = 0; i < sticks.size(); ++i) {
      const Extent& e = extents[i];
      if (y < e.y0 || y > e.y1) continue;
      for (int x = e.x0; x <= e.x1; ++x) {
        const double d = stick_depth_at(sticks[i], {x + 0.5, y + 0.5}, hw);
        if (d < 0.0) continue;
        if (near[x] < 0 || d < near_depth[x]) {
          near[x] = static_cast<int>(i);
          near_depth[x] = d;
        }
        if (far[x] < 0 || d > far_depth[x]) {
          far[x] = static_cast<int>(i);
          far_depth[x] = d;
        }
      }
    }
    for (int x = 0; x < size; ++x) {
      if (near[x] < 0) continue;
      paint(out.fore, size, y, x, palette[sticks[near[x]].bone]);
      paint(out.back, size, y, x, palette[sticks[far[x]].bone]);
    }
  }
  return out;
}

std::vector<Stick> project_sticks(const SkeletonModel& model, const Pose3D& pose,
                                  const Camera& camera, const CropWindow& window) {
  const Pose2D image = project_pose(camera, pose);
  std::vector<Stick> sticks;
  sticks.reserve(kNumBones);
  for (int b = 0; b < kNumBones; ++b) {
    const Bone& bone = model.bones[b];
    sticks.push_back({to_canvas(window, image[bone.parent]), to_canvas(window, image[bone.child]),
                      pose[bone.parent].z, pose[bone.child].z, b});
  }
  return sticks;
}

SkeletonMapPair render_pair(const SkeletonModel& model, const Pose3D& pose, const Camera& camera,
                            CropWindow window, const MapConfig& config) {
  validate(config);
  window.out_size = config.canvas_size;
  const auto sticks = project_sticks(model, pose, camera, window);
  return rasterize(sticks, model.bone_colors, config);
}

std::vector<SkeletonMapPair> render_all(const SkeletonModel& model, const Pose3D& pose,
                                        const Camera& camera, Vec2 base_center,
                                        double person_scale, std::span<const MapConfig> configs) {
  if (configs.empty()) throw PreconditionError("render_all needs at least one config");
  std::vector<SkeletonMapPair> out;
  out.reserve(configs.size());
  for (size_t i = 0; i < configs.size(); ++i) {
    try {
      const CropWindow window = crop_window(base_center, person_scale, configs[i].crop_scale,
                                            configs[i].canvas_size);
      out.push_back(render_pair(model, pose, camera, window, configs[i]));
    } catch (const Error& e) {
      throw DomainError("config " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<float> render_person_image(const SkeletonModel& model, const Pose3D& pose,
                                       const Camera& camera, CropWindow window, int size,
                                       std::uint64_t seed) {
  if (size < 8) throw DomainError("image size must be at least 8");
  window.out_size = size;
  const auto sticks = project_sticks(model, pose, camera, window);
  const double hw = 0.06 * size;
  const double body[3] = {0.85, 0.65, 0.55};
  const size_t plane = static_cast<size_t>(size) * size;
  std::vector<float> image(3 * plane);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const size_t at = static_cast<size_t>(y) * size + x;
      bool covered = false;
      for (const Stick& s : sticks) {
        if (stick_depth_at(s, {x + 0.5, y + 0.5}, hw) >= 0.0) {
          covered = true;
          break;
        }
      }
      for (int c = 0; c < 3; ++c) {
        const double noise = unit_hash(seed, at * 3 + c);
        image[c * plane + at] =
            static_cast<float>(covered ? body[c] - 0.1 * noise : 0.5 * noise);
      }
    }
  }
  return image;
}

std::string encode_png_rgb(std::span<const std::uint8_t> rgb, int width, int height) {
  if (rgb.size() != static_cast<size_t>(width) * height * 3) {
    throw ShapeError("PNG buffer does not match width × height × 3");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png_create_info_struct failed");
  }
  std::string out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng failed while encoding");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<char*>(data), len);
      },
      nullptr);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<size_t>(y) * width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

std::string encode_map_png(const SkeletonMapPair& pair, MapLayer which) {
  const int s = pair.size();
  std::vector<std::uint8_t> rgb(static_cast<size_t>(s) * s * 3);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(pair.at(which, c, y, x)), 0.0, 1.0);
        rgb[(static_cast<size_t>(y) * s + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return encode_png_rgb(rgb, s, s);
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view bytes, size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_map_tensor(const SkeletonMapPair& pair) {
  std::string out = "SKMP";
  put_u32(out, static_cast<std::uint32_t>(pair.size()));
  put_u32(out, 6);
  put_u32(out, 0);
  for (const auto* layer : {&pair.fore, &pair.back}) {
    for (float f : *layer) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      put_u32(out, bits);
    }
  }
  return out;
}

SkeletonMapPair decode_map_tensor(std::string_view bytes) {
  if (bytes.size() < 16 || bytes.substr(0, 4) != "SKMP") throw ParseError("map tensor: bad magic");
  const std::uint32_t size = get_u32(bytes, 4);
  const std::uint32_t channels = get_u32(bytes, 8);
  if (channels != 6) throw ParseError("map tensor: expected 6 channels");
  if (size < 1 || size > 4096) throw ParseError("map tensor: implausible canvas size");
  const size_t n = 3 * static_cast<size_t>(size) * size;
  if (bytes.size() != 16 + 2 * n * 4) throw ParseError("map tensor: truncated payload");
  SkeletonMapPair pair;
  pair.config.canvas_size = static_cast<int>(size);
  pair.fore.resize(n);
  pair.back.resize(n);
  size_t at = 16;
  for (auto* layer : {&pair.fore, &pair.back}) {
    for (float& f : *layer) {
      const std::uint32_t bits = get_u32(bytes, at);
      std::memcpy(&f, &bits, sizeof f);
      at += 4;
    }
  }
  return pair;
}

void write_map_tensor(const std::filesystem::path& path, const SkeletonMapPair& pair) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_map_tensor(pair);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path.string());
}

SkeletonMapPair read_map_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_map_tensor(ss.str());
}

}  // namespace skelpose

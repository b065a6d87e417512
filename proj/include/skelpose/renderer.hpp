#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelpose/geometry.hpp"
#include "skelpose/skeleton.hpp"

namespace skelpose {

// One skeleton-map configuration: crop scale c, stick width l, canvas size.
struct MapConfig {
  double crop_scale = 1.0;
  int stick_width = 10;
  int canvas_size = 56;
  bool operator==(const MapConfig&) const = default;
};

inline constexpr int kMinStickWidth = 5;
inline constexpr int kMaxStickWidth = 15;
inline constexpr int kMinCanvasSize = 16;

void validate(const MapConfig& config);

nlohmann::json config_to_json(const MapConfig& config);
// Missing canvas_size defaults to 56; the result is validated.
MapConfig config_from_json(const nlohmann::json& j);

// Short tag such as "c1.25_l10" used in file names.
std::string config_tag(const MapConfig& config);

enum class MapLayer { kFore, kBack };

// Foreground and background maps, each 3 × S × S channel-major floats in [0,1].
struct SkeletonMapPair {
  MapConfig config;
  std::vector<float> fore;
  std::vector<float> back;

  int size() const { return config.canvas_size; }
  const std::vector<float>& layer(MapLayer which) const { return which == MapLayer::kFore ? fore : back; }
  float at(MapLayer which, int channel, int y, int x) const {
    const int s = size();
    return layer(which)[(static_cast<size_t>(channel) * s + y) * s + x];
  }
  bool operator==(const SkeletonMapPair&) const = default;
};

// A bone projected onto the canvas with camera depths at both ends.
struct Stick {
  Vec2 a;
  Vec2 b;
  double depth_a = 1.0;
  double depth_b = 1.0;
  int bone = 0;
};

// Interpolated depth at canvas point q if q lies within half_width of the
// segment (capsule test); negative when not covered.
double stick_depth_at(const Stick& stick, Vec2 q, double half_width);

// Naive pixel-major serial rasterizer. Kept as the reference for tests.
SkeletonMapPair rasterize_reference(std::span<const Stick> sticks, std::span<const Rgb> palette,
                                    const MapConfig& config);

// Bone-major, bounding-box culled, row-parallel rasterizer. Bit-identical to
// rasterize_reference for any thread count.
SkeletonMapPair rasterize(std::span<const Stick> sticks, std::span<const Rgb> palette,
                          const MapConfig& config);

// Projects every bone of `pose` into the window's canvas.
std::vector<Stick> project_sticks(const SkeletonModel& model, const Pose3D& pose,
                                  const Camera& camera, const CropWindow& window);

// Occlusion-aware fore/back skeleton maps; the canvas size of `config`
// overrides window.out_size.
SkeletonMapPair render_pair(const SkeletonModel& model, const Pose3D& pose, const Camera& camera,
                            CropWindow window, const MapConfig& config);

// One pair per config, each with its own crop window around base_center.
std::vector<SkeletonMapPair> render_all(const SkeletonModel& model, const Pose3D& pose,
                                        const Camera& camera, Vec2 base_center,
                                        double person_scale, std::span<const MapConfig> configs);

// Synthetic RGB stand-in for a camera image: a single-colour body silhouette
// over seeded background noise, 3 × size × size channel-major.
std::vector<float> render_person_image(const SkeletonModel& model, const Pose3D& pose,
                                       const Camera& camera, CropWindow window, int size,
                                       std::uint64_t seed);

// 8-bit RGB PNG of one layer.
std::string encode_map_png(const SkeletonMapPair& pair, MapLayer which);
std::string encode_png_rgb(std::span<const std::uint8_t> rgb, int width, int height);

// Raw tensor: 16-byte header ("SKMP", u32 canvas, u32 channels = 6, u32 0)
// followed by little-endian f32 channel-major data, fore channels first.
std::string encode_map_tensor(const SkeletonMapPair& pair);
SkeletonMapPair decode_map_tensor(std::string_view bytes);
void write_map_tensor(const std::filesystem::path& path, const SkeletonMapPair& pair);
SkeletonMapPair read_map_tensor(const std::filesystem::path& path);

}  // namespace skelpose

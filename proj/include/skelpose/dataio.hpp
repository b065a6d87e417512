#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelpose/geometry.hpp"
#include "skelpose/hypotheses.hpp"
#include "skelpose/renderer.hpp"

namespace skelpose {

struct Sample {
  std::string id;
  std::optional<std::string> image_ref;
  Vec2 center;
  double person_scale = 1.0;
  Camera camera;
  Pose2D joints2d{};
  std::optional<Pose3D> joints3d;
  double head_size = 1.0;
  bool pseudo_gt = false;
  // Largest allowed pixel distance between project_pose(joints3d) and joints2d.
  double residual_tol = 1e-6;
  // Bumped on every accepted annotation write.
  int revision = 0;
};

enum class Split { kTrain, kVal, kTest };

std::string split_name(Split split);
Split parse_split(std::string_view name);

struct Dataset {
  std::vector<Sample> samples;
  Split split = Split::kTrain;
  std::string skeleton = "mpii-16";

  const Sample* find(std::string_view id) const;
  Sample* find(std::string_view id);
};

// Throws PreconditionError naming the violated invariant.
void validate(const Sample& sample);
void validate(const Dataset& dataset);

nlohmann::json sample_to_json(const Sample& sample);
// `where` prefixes every diagnostic, e.g. "samples[3]".
Sample sample_from_json(const nlohmann::json& j, const std::string& where = "sample");
nlohmann::json dataset_to_json(const Dataset& dataset);
Dataset dataset_from_json(const nlohmann::json& j);

nlohmann::json pose3d_to_json(const Pose3D& pose);
Pose3D pose3d_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json pose2d_to_json(const Pose2D& pose);
Pose2D pose2d_from_json(const nlohmann::json& j, const std::string& where);

Dataset load_dataset(const std::filesystem::path& path);
// Atomic replace via temp file + rename.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// Bone lengths in mm, in skeleton bone order; a 1700 mm figure.
std::array<double, kNumBones> default_bone_lengths();

// Default synthetic camera: f = 1000 px, principal point (500, 500).
Camera default_camera();

// Forward-kinematics poses with bounded per-bone rotations, root depth
// uniform in [2000, 4000] mm, exact projections.
Dataset synth_dataset(int n, std::uint64_t seed, const Camera& camera,
                      const std::array<double, kNumBones>& bone_lengths = default_bone_lengths());

// Ground-truth maps for a sample's 3D pose in the crop window implied by its
// center, person scale and the config's crop scale. PreconditionError when
// the sample has no 3D pose.
SkeletonMapPair render_sample(const Sample& sample, const MapConfig& config);
// Synthetic person image for the same window (3 × S × S, values in [0, 1]).
std::vector<float> sample_image(const Sample& sample, const MapConfig& config, std::uint64_t seed);

// ---- detections ----

struct Detection {
  std::string sample_id;
  Pose2D joints2d{};
};

std::vector<Detection> detections_from_dataset(const Dataset& dataset, double noise_px,
                                               std::uint64_t seed);
nlohmann::json detections_to_json(const std::vector<Detection>& detections);
std::vector<Detection> detections_from_json(const nlohmann::json& j);

// ---- hypotheses per sample ----

struct SampleHypotheses {
  std::string sample_id;
  HypothesisSet hypotheses;
};

nlohmann::json hypotheses_to_json(const std::vector<SampleHypotheses>& all);
std::vector<SampleHypotheses> hypotheses_from_json(const nlohmann::json& j);

// ---- selected predictions ----

struct Prediction {
  std::string sample_id;
  std::optional<Pose3D> joints3d;  // root-relative
  std::optional<Pose2D> joints2d;
};

nlohmann::json predictions_to_json(const std::vector<Prediction>& predictions);
std::vector<Prediction> predictions_from_json(const nlohmann::json& j);

// JSON helpers shared by the CLI and the service.
nlohmann::json load_json(const std::filesystem::path& path);
void save_json(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace skelpose

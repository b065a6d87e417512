#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

namespace skelpose {

inline constexpr int kNumJoints = 16;
inline constexpr int kNumBones = 15;

// MPII joint order.
enum Joint : int {
  kRightAnkle = 0,
  kRightKnee,
  kRightHip,
  kLeftHip,
  kLeftKnee,
  kLeftAnkle,
  kPelvis,
  kThorax,
  kUpperNeck,
  kHeadTop,
  kRightWrist,
  kRightElbow,
  kRightShoulder,
  kLeftShoulder,
  kLeftElbow,
  kLeftWrist,
};

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  bool operator==(const Rgb&) const = default;
};

struct Bone {
  int parent = 0;
  int child = 0;
};

// The fixed 16-joint / 15-bone articulation rooted at the thorax.
struct SkeletonModel {
  std::array<std::string, kNumJoints> joint_names;
  int root_index = kThorax;
  std::array<Bone, kNumBones> bones;
  std::array<Rgb, kNumBones> bone_colors;

  // Parent joint of `joint`, or nullopt for the root.
  std::optional<int> parent_of(int joint) const;
  int joint_index(const std::string& name) const;
};

const SkeletonModel& standard_model();

// Bone whose child is `joint`; nullopt for the root. Throws DomainError when
// the index is out of range.
std::optional<int> bone_of_child(const SkeletonModel& model, int joint);

// HSV (h in [0,1), s, v in [0,1]) to RGB.
Rgb hsv_to_rgb(double h, double s, double v);

// `skeleton.json` document: joints, root, bones, colors.
nlohmann::json skeleton_to_json(const SkeletonModel& model);

}  // namespace skelpose

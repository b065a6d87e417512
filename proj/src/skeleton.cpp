#include "skelpose/skeleton.hpp"

#include <cmath>

#include "skelpose/error.hpp"

namespace skelpose {

namespace {

SkeletonModel make_standard() {
  SkeletonModel m;
  m.joint_names = {"r-ankle",  "r-knee",     "r-hip",      "l-hip",
                   "l-knee",   "l-ankle",    "pelvis",     "thorax",
                   "upper-neck", "head-top", "r-wrist",    "r-elbow",
                   "r-shoulder", "l-shoulder", "l-elbow",  "l-wrist"};
  m.root_index = kThorax;
  m.bones = {{
      {kThorax, kPelvis},
      {kPelvis, kRightHip},
      {kPelvis, kLeftHip},
      {kRightHip, kRightKnee},
      {kRightKnee, kRightAnkle},
      {kLeftHip, kLeftKnee},
      {kLeftKnee, kLeftAnkle},
      {kThorax, kUpperNeck},
      {kUpperNeck, kHeadTop},
      {kThorax, kRightShoulder},
      {kThorax, kLeftShoulder},
      {kRightShoulder, kRightElbow},
      {kRightElbow, kRightWrist},
      {kLeftShoulder, kLeftElbow},
      {kLeftElbow, kLeftWrist},
  }};
  for (int b = 0; b < kNumBones; ++b) {
    m.bone_colors[b] = hsv_to_rgb(static_cast<double>(b) / kNumBones, 1.0, 1.0);
  }
  return m;
}

}  // namespace

Rgb hsv_to_rgb(double h, double s, double v) {
  const double h6 = h * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

const SkeletonModel& standard_model() {
  static const SkeletonModel model = make_standard();
  return model;
}

std::optional<int> SkeletonModel::parent_of(int joint) const {
  const auto bone = bone_of_child(*this, joint);
  if (!bone) return std::nullopt;
  return bones[*bone].parent;
}

int SkeletonModel::joint_index(const std::string& name) const {
  for (int j = 0; j < kNumJoints; ++j) {
    if (joint_names[j] == name) return j;
  }
  throw DomainError("unknown joint name: " + name);
}

std::optional<int> bone_of_child(const SkeletonModel& model, int joint) {
  if (joint < 0 || joint >= kNumJoints) {
    throw DomainError("joint index out of range: " + std::to_string(joint));
  }
  for (int b = 0; b < kNumBones; ++b) {
    if (model.bones[b].child == joint) return b;
  }
  return std::nullopt;
}

nlohmann::json skeleton_to_json(const SkeletonModel& model) {
  nlohmann::json doc;
  doc["joints"] = model.joint_names;
  doc["root"] = model.root_index;
  auto bones = nlohmann::json::array();
  auto colors = nlohmann::json::array();
  for (int b = 0; b < kNumBones; ++b) {
    bones.push_back({model.bones[b].parent, model.bones[b].child});
    const Rgb& c = model.bone_colors[b];
    colors.push_back({c.r, c.g, c.b});
  }
  doc["bones"] = std::move(bones);
  doc["colors"] = std::move(colors);
  return doc;
}

}  // namespace skelpose

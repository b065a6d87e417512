#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelpose/geometry.hpp"

namespace skelpose {

// Mean per-joint position error (mm) after moving both roots to the origin.
double mpjpe(const Pose3D& pred, const Pose3D& gt, int root = kThorax);
// Variable-length form; ShapeError on joint-count mismatch.
double mpjpe(std::span<const Vec3> pred, std::span<const Vec3> gt, int root);

using JointHits = std::array<bool, kNumJoints>;

// Joint j hits iff ‖pred_j − gt_j‖ ≤ tau · norm_length (closed threshold).
JointHits pckh(const Pose2D& pred, const Pose2D& gt, double norm_length, double tau = 0.5);

struct JointGroup {
  std::string name;
  std::vector<int> joints;
};

// Head, Sho., Elb., Wri., Hip, Knee, Ank.; "Mean" covers all 16 joints.
const std::vector<JointGroup>& pckh_groups();

struct SampleEval {
  std::string id;
  std::optional<double> mpjpe_mm;
  std::optional<JointHits> hits;
};

struct GroupScore {
  std::string name;
  double pckh_percent = 0.0;
};

struct EvalReport {
  std::vector<SampleEval> per_sample;
  std::optional<double> mean_mpjpe_mm;
  // Groups in table order, "Mean" last; empty when no sample carries hits.
  std::vector<GroupScore> pckh;
};

// PreconditionError on empty input.
EvalReport aggregate(std::span<const SampleEval> samples);

std::string report_csv(const EvalReport& report);
nlohmann::json report_json(const EvalReport& report);

}  // namespace skelpose

#include "skelpose/hypotheses.hpp"

#include <cmath>
#include <limits>

#include "skelpose/error.hpp"
#include "skelpose/metrics.hpp"

namespace skelpose {

GridMode parse_grid_mode(std::string_view name) {
  if (name == "h36m") return GridMode::kH36m;
  if (name == "mpii") return GridMode::kMpii;
  if (name == "ensemble") return GridMode::kEnsemble;
  throw PreconditionError("unknown grid mode '" + std::string(name) + "' (h36m|mpii|ensemble)");
}

std::vector<MapConfig> config_grid(GridMode mode, int canvas_size) {
  std::vector<MapConfig> grid;
  switch (mode) {
    case GridMode::kH36m:
      for (int l = 5; l <= 15; ++l) grid.push_back({1.0, l, canvas_size});
      break;
    case GridMode::kMpii:
      for (double c : {1.0, 1.25, 1.5})
        for (int l = 5; l <= 10; ++l) grid.push_back({c, l, canvas_size});
      break;
    case GridMode::kEnsemble:
      grid.assign(11, MapConfig{1.0, 10, canvas_size});
      break;
  }
  for (const auto& c : grid) validate(c);
  return grid;
}

namespace {

void check_root_relative(const HypothesisSet& hyps) {
  if (hyps.entries.empty()) throw PreconditionError("hypothesis set is empty");
  for (size_t i = 0; i < hyps.size(); ++i) {
    if (norm(hyps.entries[i].pose[kThorax]) > 1e-6) {
      throw PreconditionError("hypothesis " + std::to_string(i) + " is not root-relative");
    }
  }
}

}  // namespace

Pose3D place_on_root_ray(const Pose3D& pose, const Pose2D& detection, const Camera& camera,
                         double root_depth) {
  const Vec3 root = back_project(camera, detection[kThorax], root_depth);
  Pose3D placed;
  for (int j = 0; j < kNumJoints; ++j) placed[j] = pose[j] - pose[kThorax] + root;
  return placed;
}

double reprojection_error(const Pose3D& pose, const Pose2D& detection, const Camera& camera,
                          double root_depth) {
  const Pose3D placed = place_on_root_ray(pose, detection, camera, root_depth);
  double total = 0.0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!(placed[j].z > 0.0)) return std::numeric_limits<double>::infinity();
    const Vec2 d = project(camera, placed[j]) - detection[j];
    total += d.u * d.u + d.v * d.v;
  }
  return total;
}

MatchResult match_to_2d(const HypothesisSet& hyps, const Pose2D& detection, const Camera& camera,
                        double root_depth) {
  if (!(root_depth > 0.0)) throw DomainError("match_to_2d: root_depth must be positive");
  check_root_relative(hyps);
  MatchResult best;
  best.reprojection_error = std::numeric_limits<double>::infinity();
  bool found = false;
  for (size_t i = 0; i < hyps.size(); ++i) {
    const double e = reprojection_error(hyps.entries[i].pose, detection, camera, root_depth);
    if (!found || e < best.reprojection_error) {
      best.index = i;
      best.reprojection_error = e;
      found = true;
    }
  }
  best.pose = place_on_root_ray(hyps.entries[best.index].pose, detection, camera, root_depth);
  return best;
}

OracleResult oracle_select(const HypothesisSet& hyps, const Pose3D& gt) {
  check_root_relative(hyps);
  OracleResult best{0, std::numeric_limits<double>::infinity()};
  for (size_t i = 0; i < hyps.size(); ++i) {
    const double e = mpjpe(hyps.entries[i].pose, gt);
    if (e < best.mpjpe_mm) best = {i, e};
  }
  return best;
}

}  // namespace skelpose

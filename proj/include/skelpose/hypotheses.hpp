#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "skelpose/geometry.hpp"
#include "skelpose/renderer.hpp"

namespace skelpose {

enum class GridMode { kH36m, kMpii, kEnsemble };

GridMode parse_grid_mode(std::string_view name);

// h36m: c = 1.0, l = 5..15 (11 configs). mpii: c ∈ {1.0, 1.25, 1.5} (outer)
// × l = 5..10 (inner), 18 configs. ensemble: 11 copies of (1.0, 10); copies
// are told apart by their training seed.
std::vector<MapConfig> config_grid(GridMode mode, int canvas_size = 56);

struct Hypothesis {
  MapConfig config;
  Pose3D pose;  // root-relative, mm
  std::string source;
};

struct HypothesisSet {
  std::vector<Hypothesis> entries;
  size_t size() const { return entries.size(); }
};

// Places the root-relative pose so the root sits at `root_depth` on the ray
// through the detected root, then sums squared pixel distances to the
// detection. +inf when a joint ends up at non-positive depth.
double reprojection_error(const Pose3D& root_relative_pose, const Pose2D& detection,
                          const Camera& camera, double root_depth);

// The same placement, returned as a camera-frame pose.
Pose3D place_on_root_ray(const Pose3D& root_relative_pose, const Pose2D& detection,
                         const Camera& camera, double root_depth);

struct MatchResult {
  size_t index = 0;
  Pose3D pose;  // camera frame
  double reprojection_error = 0.0;
};

// argmin of reprojection_error; ties go to the smaller index.
MatchResult match_to_2d(const HypothesisSet& hyps, const Pose2D& detection, const Camera& camera,
                        double root_depth);

struct OracleResult {
  size_t index = 0;
  double mpjpe_mm = 0.0;
};

// argmin of root-aligned MPJPE against the ground truth.
OracleResult oracle_select(const HypothesisSet& hyps, const Pose3D& gt);

}  // namespace skelpose

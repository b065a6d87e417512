#include "skelpose/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skelpose/error.hpp"

namespace skelpose {

double norm(const Vec3& a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }
double norm(const Vec2& a) { return std::sqrt(a.u * a.u + a.v * a.v); }

Vec2 project(const Camera& camera, const Vec3& p) {
  if (!(p.z > 0.0)) {
    throw DomainError("cannot project point with non-positive depth " + std::to_string(p.z));
  }
  return {camera.fx * p.x / p.z + camera.cx, camera.fy * p.y / p.z + camera.cy};
}

Pose2D project_pose(const Camera& camera, const Pose3D& pose) {
  Pose2D out;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!(pose[j].z > 0.0)) {
      throw DomainError("joint " + std::to_string(j) + " has non-positive depth " +
                        std::to_string(pose[j].z));
    }
    out[j] = project(camera, pose[j]);
  }
  return out;
}

Vec3 back_project(const Camera& camera, const Vec2& pixel, double depth) {
  if (!(depth > 0.0)) throw DomainError("back-projection depth must be positive");
  return {(pixel.u - camera.cx) * depth / camera.fx, (pixel.v - camera.cy) * depth / camera.fy,
          depth};
}

CropWindow crop_window(Vec2 center, double person_scale, double crop_scale, int out_size) {
  if (!(person_scale > 0.0)) throw DomainError("person_scale must be positive");
  if (!(crop_scale > 0.0)) throw DomainError("crop_scale must be positive");
  if (out_size < 8) throw DomainError("crop out_size must be at least 8");
  return {center, kPersonScalePixels * person_scale * crop_scale, out_size};
}

Vec2 to_canvas(const CropWindow& window, const Vec2& p) {
  const double k = window.out_size / window.side;
  const double half = 0.5 * window.side;
  return {(p.u - (window.center.u - half)) * k, (p.v - (window.center.v - half)) * k};
}

Vec2 from_canvas(const CropWindow& window, const Vec2& q) {
  const double k = window.side / window.out_size;
  const double half = 0.5 * window.side;
  return {q.u * k + (window.center.u - half), q.v * k + (window.center.v - half)};
}

Pose3D root_relative(const Pose3D& pose, int root) {
  Pose3D out;
  const Vec3 r = pose[root];
  for (int j = 0; j < kNumJoints; ++j) out[j] = pose[j] - r;
  return out;
}

double max_reprojection_residual(const Camera& camera, const Pose3D& pose,
                                 const Pose2D& observed) {
  const Pose2D proj = project_pose(camera, pose);
  double worst = 0.0;
  for (int j = 0; j < kNumJoints; ++j) worst = std::max(worst, norm(proj[j] - observed[j]));
  return worst;
}

}  // namespace skelpose

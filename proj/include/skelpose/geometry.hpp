#pragma once

#include <array>

#include "skelpose/skeleton.hpp"

namespace skelpose {

struct Vec2 {
  double u = 0.0;
  double v = 0.0;
  bool operator==(const Vec2&) const = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool operator==(const Vec3&) const = default;
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }
inline Vec2 operator+(const Vec2& a, const Vec2& b) { return {a.u + b.u, a.v + b.v}; }
inline Vec2 operator-(const Vec2& a, const Vec2& b) { return {a.u - b.u, a.v - b.v}; }
inline Vec2 operator*(double s, const Vec2& a) { return {s * a.u, s * a.v}; }

double norm(const Vec3& a);
double norm(const Vec2& a);

// Camera-frame millimeters, Z positive into the scene.
using Pose3D = std::array<Vec3, kNumJoints>;
// Image pixels.
using Pose2D = std::array<Vec2, kNumJoints>;

struct Camera {
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 0.0;
  double cy = 0.0;
  bool operator==(const Camera&) const = default;
};

// Square image window that maps onto an out_size × out_size canvas.
struct CropWindow {
  Vec2 center;
  double side = 1.0;
  int out_size = 56;
};

// Pixels of person height per unit person scale (MPII convention).
inline constexpr double kPersonScalePixels = 200.0;

// Pinhole projection; DomainError if p.z <= 0.
Vec2 project(const Camera& camera, const Vec3& p);

// Per-joint projection; the DomainError message names the offending joint.
Pose2D project_pose(const Camera& camera, const Pose3D& pose);

// Inverse of `project` at a given depth.
Vec3 back_project(const Camera& camera, const Vec2& pixel, double depth);

CropWindow crop_window(Vec2 center, double person_scale, double crop_scale, int out_size);

Vec2 to_canvas(const CropWindow& window, const Vec2& p);
Vec2 from_canvas(const CropWindow& window, const Vec2& q);

// Subtracts the root joint from every joint.
Pose3D root_relative(const Pose3D& pose, int root = kThorax);

// Largest per-joint pixel distance between `project_pose(camera, pose)` and `observed`.
double max_reprojection_residual(const Camera& camera, const Pose3D& pose, const Pose2D& observed);

}  // namespace skelpose

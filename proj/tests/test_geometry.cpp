#include <doctest.h>

#include <random>

#include "skelpose/error.hpp"
#include "skelpose/geometry.hpp"

using namespace skelpose;

TEST_CASE("project: pinhole formula") {
  const Camera cam{1000, 1000, 112, 112};
  CHECK(project(cam, {0, 0, 1000}) == Vec2{112, 112});
  // 1000·100/1000 + 112 = 212; 1000·(−50)/1000 + 112 = 62
  const Vec2 p = project(cam, {100, -50, 1000});
  CHECK(p.u == doctest::Approx(212).epsilon(1e-15));
  CHECK(p.v == doctest::Approx(62).epsilon(1e-15));
  CHECK_THROWS_AS(project(cam, {0, 0, -5}), DomainError);
  CHECK_THROWS_AS(project(cam, {0, 0, 0}), DomainError);
}

TEST_CASE("project is homogeneous in (X, Y, Z)") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-500, 500), z(500, 5000), s(0.1, 10);
  const Camera cam{950, 1010, 320, 240};
  for (int i = 0; i < 200; ++i) {
    const Vec3 p{u(rng), u(rng), z(rng)};
    const double lambda = s(rng);
    const Vec2 a = project(cam, p);
    const Vec2 b = project(cam, lambda * p);
    CHECK(a.u == doctest::Approx(b.u).epsilon(1e-12));
    CHECK(a.v == doctest::Approx(b.v).epsilon(1e-12));
  }
}

TEST_CASE("project_pose matches per-joint projection and names bad joints") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-800, 800), z(1500, 4000);
  const Camera cam{1000, 1000, 500, 500};
  Pose3D pose;
  for (auto& j : pose) j = {u(rng), u(rng), z(rng)};
  const Pose2D proj = project_pose(cam, pose);
  for (int j = 0; j < kNumJoints; ++j) CHECK(proj[j] == project(cam, pose[j]));

  Pose3D doubled;
  for (int j = 0; j < kNumJoints; ++j) doubled[j] = 2.0 * pose[j];
  const Pose2D proj2 = project_pose(cam, doubled);
  for (int j = 0; j < kNumJoints; ++j) {
    CHECK(proj2[j].u == doctest::Approx(proj[j].u).epsilon(1e-12));
    CHECK(proj2[j].v == doctest::Approx(proj[j].v).epsilon(1e-12));
  }

  pose[7].z = -1;
  try {
    project_pose(cam, pose);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("joint 7") != std::string::npos);
  }
}

TEST_CASE("crop_window side follows 200 · scale · crop") {
  const CropWindow w = crop_window({500, 400}, 2.0, 1.0, 224);
  CHECK(w.side == 400.0);
  CHECK(w.center == Vec2{500, 400});
  CHECK(crop_window({500, 400}, 2.0, 1.25, 224).side == 1.25 * w.side);
  CHECK(crop_window({0, 0}, 3.0, 1.5, 56).side == doctest::Approx(3.0 / 2.0 * 1.5 * w.side));
  CHECK_THROWS_AS(crop_window({0, 0}, 0.0, 1.0, 56), DomainError);
  CHECK_THROWS_AS(crop_window({0, 0}, 1.0, -1.0, 56), DomainError);
  CHECK_THROWS_AS(crop_window({0, 0}, 1.0, 1.0, 4), DomainError);
}

TEST_CASE("to_canvas maps window center and corner, inverts exactly") {
  const CropWindow w = crop_window({500, 400}, 2.0, 1.0, 56);
  CHECK(to_canvas(w, w.center).u == doctest::Approx(28));
  CHECK(to_canvas(w, w.center).v == doctest::Approx(28));
  const Vec2 corner = to_canvas(w, {500 + 200, 400 + 200});
  CHECK(corner.u == doctest::Approx(56));
  CHECK(corner.v == doctest::Approx(56));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2000, 2000);
  for (int i = 0; i < 100; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const Vec2 back = from_canvas(w, to_canvas(w, p));
    CHECK(std::abs(back.u - p.u) < 1e-9);
    CHECK(std::abs(back.v - p.v) < 1e-9);
  }
}

TEST_CASE("to_canvas is affine: preserves ratios along lines") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1000, 1000), t(0, 1);
  const CropWindow w = crop_window({321, 123}, 1.7, 1.25, 56);
  for (int i = 0; i < 100; ++i) {
    const Vec2 a{u(rng), u(rng)}, b{u(rng), u(rng)};
    const double r = t(rng);
    const Vec2 m = a + r * (b - a);
    const Vec2 ca = to_canvas(w, a), cb = to_canvas(w, b), cm = to_canvas(w, m);
    const Vec2 expect = ca + r * (cb - ca);
    CHECK(std::abs(cm.u - expect.u) < 1e-9);
    CHECK(std::abs(cm.v - expect.v) < 1e-9);
  }
}

TEST_CASE("back_project inverts project") {
  const Camera cam{1000, 900, 500, 400};
  const Vec3 p{123, -456, 2500};
  const Vec3 q = back_project(cam, project(cam, p), p.z);
  CHECK(q.x == doctest::Approx(p.x));
  CHECK(q.y == doctest::Approx(p.y));
  CHECK(q.z == p.z);
  CHECK_THROWS_AS(back_project(cam, {0, 0}, 0.0), DomainError);
}

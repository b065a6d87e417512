// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Tolerances and budgets are fixed constants below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "skelpose/dataio.hpp"
#include "skelpose/hypotheses.hpp"
#include "skelpose/io.hpp"
#include "skelpose/metrics.hpp"
#include "skelpose/networks.hpp"
#include "skelpose/renderer.hpp"
#include "support.hpp"

using namespace skelpose;
using namespace skelpose::testing;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances and budgets ----
constexpr int kRenderScenes = 1000;
constexpr double kRenderSeconds = 60.0;
constexpr int kGradSeeds = 20;
constexpr double kGradTol = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr double kGradSeconds = 120.0;
constexpr int kCompareSamples = 64;
constexpr int kCompareCanvas = 32;
constexpr int kCompareIters = 500;
constexpr int kCompareBatch = 16;
constexpr int kHypTrainSamples = 256;
constexpr int kHypEvalSamples = 64;
constexpr int kHypCanvas = 32;
constexpr int kHypIters = 600;
constexpr int kHypBatch = 16;
constexpr double kPipelineSeconds = 600.0;

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- renderer oracle equivalence ----

void renderer_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<int> canvas(kMinCanvasSize, 32), width(kMinStickWidth, kMaxStickWidth);
  const auto& palette = standard_model().bone_colors;
  int mismatched = 0;
  for (int i = 0; i < kRenderScenes; ++i) {
    const MapConfig cfg{1.0, width(rng), canvas(rng)};
    const auto sticks = random_scene(rng, cfg.canvas_size);
    if (!(rasterize(sticks, palette, cfg) == rasterize_reference(sticks, palette, cfg))) ++mismatched;
  }
  const double s = seconds_since(t0);
  report(mismatched == 0 && s < kRenderSeconds, "renderer_oracle_equivalence",
         fmt("%.0f/%.0f scenes bit-identical in %.2f s (limit %.0f s)", kRenderScenes - mismatched,
             kRenderScenes, s, kRenderSeconds));
}

// ---- occlusion semantics ----

// Independent capsule test: distance from q to the segment, and the clamped
// segment parameter.
bool covers(const Stick& s, double qx, double qy, double half, double& depth) {
  const double dx = s.b.u - s.a.u, dy = s.b.v - s.a.v, len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((qx - s.a.u) * dx + (qy - s.a.v) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double px = s.a.u + t * dx - qx, py = s.a.v + t * dy - qy;
  depth = (1 - t) * s.depth_a + t * s.depth_b;
  return px * px + py * py <= half * half;
}

std::array<float, 3> px(const SkeletonMapPair& p, MapLayer w, int y, int x) {
  return {p.at(w, 0, y, x), p.at(w, 1, y, x), p.at(w, 2, y, x)};
}

std::array<float, 3> color(int bone) {
  const Rgb& c = standard_model().bone_colors[bone];
  return {static_cast<float>(c.r), static_cast<float>(c.g), static_cast<float>(c.b)};
}

// Expected fore/back colors of one pixel from the independent capsule test.
std::pair<std::array<float, 3>, std::array<float, 3>> expected_pixel(const Stick& s0, const Stick& s1,
                                                                     double qx, double qy,
                                                                     double half, bool& overlap) {
  double d0 = 0, d1 = 0;
  const bool c0 = covers(s0, qx, qy, half, d0), c1 = covers(s1, qx, qy, half, d1);
  overlap = c0 && c1;
  if (overlap) {
    // Ties go to the smaller bone index.
    const bool first_near = d0 < d1 || (d0 == d1 && s0.bone < s1.bone);
    return first_near ? std::pair{color(s0.bone), color(s1.bone)}
                      : std::pair{color(s1.bone), color(s0.bone)};
  }
  const std::array<float, 3> c = c0 ? color(s0.bone) : c1 ? color(s1.bone) : std::array<float, 3>{};
  return {c, c};
}

void occlusion_semantics() {
  const int S = 32;
  const auto& palette = standard_model().bone_colors;
  int scenes = 0, bad = 0, overlap_total = 0;
  // Crossing pairs: two with constant depth per bone, two with sloped depths.
  const std::vector<std::pair<Stick, Stick>> base{
      {{{3, 16}, {29, 16}, 900, 900, 0}, {{16, 3}, {16, 29}, 1500, 1500, 5}},
      {{{2, 2}, {30, 30}, 2000, 2000, 3}, {{2, 30}, {30, 2}, 1000, 1000, 12}},
      {{{3, 10}, {29, 20}, 900, 1300, 2}, {{12, 2}, {18, 30}, 1400, 1000, 9}},
      {{{5, 25}, {27, 4}, 3000, 2500, 14}, {{4, 8}, {28, 22}, 2000, 3200, 7}},
  };
  for (const auto& [s0, s1] : base) {
    const bool constant = s0.depth_a == s0.depth_b && s1.depth_a == s1.depth_b;
    Stick t0 = s0, t1 = s1;
    std::swap(t0.depth_a, t1.depth_a);
    std::swap(t0.depth_b, t1.depth_b);
    for (int l = kMinStickWidth; l <= kMaxStickWidth; ++l) {
      const MapConfig cfg{1.0, l, S};
      const double half = 0.5 * l;
      const auto a = rasterize(std::vector<Stick>{s0, s1}, palette, cfg);
      const auto b = rasterize(std::vector<Stick>{t0, t1}, palette, cfg);
      ++scenes;
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          bool overlap = false, overlap_b = false;
          const auto [ef, eb] = expected_pixel(s0, s1, x + 0.5, y + 0.5, half, overlap);
          const auto [sf, sb] = expected_pixel(t0, t1, x + 0.5, y + 0.5, half, overlap_b);
          const auto fa = px(a, MapLayer::kFore, y, x), ba = px(a, MapLayer::kBack, y, x);
          const auto fb = px(b, MapLayer::kFore, y, x), bb = px(b, MapLayer::kBack, y, x);
          overlap_total += overlap;
          bad += !(fa == ef && ba == eb && fb == sf && bb == sb);
          // Outside the overlap nothing may change; with constant depths
          // every overlap pixel trades fore and back.
          if (!overlap) bad += !(fa == fb && ba == bb);
          if (overlap && constant) bad += !(fb == ba && bb == fa);
        }
    }
  }
  report(bad == 0 && overlap_total > 0, "occlusion_semantics",
         fmt("%.0f crossing scenes x 32x32 pixels, %.0f overlap pixels, %.0f violations", scenes,
             overlap_total, bad));
}

// ---- gradient suite ----

NetworkSpec tiny_generator() {
  NetworkSpec s = default_generator_spec(8);
  s.widths = {2, 3};
  s.num_stages = 2;
  s.num_intermediate_heads = 1;
  return s;
}

NetworkSpec tiny_regressor() {
  NetworkSpec s = default_regressor_spec(4);
  s.widths = {2, 2};
  s.num_stages = 2;
  return s;
}

void gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  int runs = 0;
  const auto note = [&](const std::string& name, const GradCheck& g) {
    ++runs;
    const double e = g.checked == 0 ? std::numeric_limits<double>::infinity() : g.max_rel_err;
    if (!(e <= worst)) {
      worst = e;
      worst_name = name;
    }
  };
  for (const auto& op : op_cases()) {
    for (int seed = 0; seed < kGradSeeds; ++seed) {
      std::mt19937_64 rng(50000 + seed);
      note(op.name, op.run(rng));
    }
  }
  for (int seed = 0; seed < kGradSeeds; ++seed) {
    std::mt19937_64 rng(70000 + seed);
    auto g = build_generator(tiny_generator(), seed);
    const auto img = Tensor::constant({1, 3, 8, 8}, random_values(rng, 192));
    std::vector<Tensor> targets;
    for (int s : g.head_sizes()) {
      targets.push_back(Tensor::constant({1, 6, s, s}, random_values(rng, 6 * s * s, 0.0, 1.0)));
    }
    note("generator", check_gradients(randomize_parameters(g.parameters(), rng), [&](const std::vector<Tensor>&) {
           return generator_loss(g.forward(img), targets);
         }, kGradEps));

    auto r = build_regressor(tiny_regressor(), seed);
    const auto maps = Tensor::constant({2, 6, 4, 4}, random_values(rng, 192, 0.0, 1.0));
    const auto target = Tensor::constant({2, 48}, random_values(rng, 96));
    note("regressor", check_gradients(randomize_parameters(r.parameters(), rng), [&](const std::vector<Tensor>&) {
           return euclidean_loss(r.forward(maps), target);
         }, kGradEps));
  }
  const double s = seconds_since(t0);
  report(worst < kGradTol && s < kGradSeconds, "gradient_suite",
         fmt("%.0f checks (%.0f ops + 2 networks, 20 seeds), max rel err %.3g (limit 1e-4) in %.1f s",
             runs, static_cast<double>(op_cases().size()), worst, s) +
             " (limit 120 s), worst: " + worst_name);
}

// ---- skeleton maps vs raw-image stand-in ----

double held_in_mpjpe(const Regressor& m, const std::vector<RegressorSample>& data) {
  double s = 0.0;
  for (const auto& x : data) s += mpjpe(infer_pose(m, x.input), x.target);
  return s / data.size();
}

void maps_beat_images() {
  const MapConfig cfg{1.0, 10, kCompareCanvas};
  const Dataset ds = synth_dataset(kCompareSamples, 900, default_camera());
  std::vector<RegressorSample> from_maps, from_images;
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    const Pose3D target = root_relative(*s.joints3d);
    from_maps.push_back(make_regressor_sample(render_sample(s, cfg), target));
    // The 3-channel image is repeated to fill the same 6-channel input.
    auto img = sample_image(s, cfg, 4000 + i);
    img.insert(img.end(), img.begin(), img.end());
    from_images.push_back({std::move(img), target});
  }
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    TrainConfig tc = default_regressor_training();
    tc.max_iterations = kCompareIters;
    tc.batch_size = kCompareBatch;
    tc.seed = seed;
    auto a = build_regressor(default_regressor_spec(kCompareCanvas), seed);
    auto b = build_regressor(default_regressor_spec(kCompareCanvas), seed);
    train_regressor(a, from_maps, tc);
    train_regressor(b, from_images, tc);
    const double ma = held_in_mpjpe(a, from_maps), mb = held_in_mpjpe(b, from_images);
    wins += ma < mb;
    detail += fmt(" seed %.0f: maps %.1f mm vs image %.1f mm;", seed, ma, mb);
  }
  report(wins == 3, "maps_beat_image_standin", fmt("%.0f/3 wins;", wins) + detail);
}

// ---- multi-hypothesis ordering ----

void hypothesis_ordering() {
  const auto configs = config_grid(GridMode::kH36m, kHypCanvas);
  const Dataset train = synth_dataset(kHypTrainSamples, 1100, default_camera());
  const Dataset eval = synth_dataset(kHypEvalSamples, 2200, default_camera());
  std::vector<std::vector<Pose3D>> poses(eval.samples.size());
  for (size_t k = 0; k < configs.size(); ++k) {
    std::vector<RegressorSample> data;
    for (const auto& s : train.samples) {
      data.push_back(make_regressor_sample(render_sample(s, configs[k]), root_relative(*s.joints3d)));
    }
    TrainConfig tc = default_regressor_training();
    tc.max_iterations = kHypIters;
    tc.batch_size = kHypBatch;
    tc.seed = 300 + k;
    auto m = build_regressor(default_regressor_spec(kHypCanvas), tc.seed);
    train_regressor(m, data, tc);
    for (size_t i = 0; i < eval.samples.size(); ++i) {
      poses[i].push_back(infer_pose(m, render_sample(eval.samples[i], configs[k])));
    }
  }
  std::vector<double> single(configs.size(), 0.0);
  double oracle = 0.0, matched = 0.0;
  for (size_t i = 0; i < eval.samples.size(); ++i) {
    const Sample& s = eval.samples[i];
    HypothesisSet set;
    for (size_t k = 0; k < configs.size(); ++k) set.entries.push_back({configs[k], poses[i][k], ""});
    const Pose3D gt = root_relative(*s.joints3d);
    oracle += oracle_select(set, gt).mpjpe_mm;
    const auto m = match_to_2d(set, s.joints2d, s.camera, s.joints3d->at(kThorax).z);
    matched += mpjpe(poses[i][m.index], gt);
    for (size_t k = 0; k < configs.size(); ++k) single[k] += mpjpe(poses[i][k], gt);
  }
  const double n = eval.samples.size();
  oracle /= n;
  matched /= n;
  double mean_single = 0.0, worst = 0.0;
  for (double& v : single) {
    v /= n;
    mean_single += v / single.size();
    worst = std::max(worst, v);
  }
  const bool pass = oracle <= matched && matched <= mean_single && matched < worst;
  report(pass, "multi_hypothesis_ordering",
         fmt("oracle %.2f <= match %.2f <= mean single %.2f, worst single %.2f mm", oracle, matched,
             mean_single, worst));
}

// ---- metrics unit suite ----

void metrics_suite() {
  std::vector<std::string> broken;
  // Translation invariance on integer coordinates is exact.
  Pose3D a{}, b{};
  for (int j = 0; j < kNumJoints; ++j) {
    a[j] = {10.0 * j, -20.0 * j, 3000.0 + j};
    b[j] = {10.0 * j + (j % 3), -20.0 * j + 7, 3000.0 + 2 * j};
  }
  Pose3D moved = a;
  for (auto& j : moved) j = j + Vec3{125, -250, 500};
  if (mpjpe(moved, b) != mpjpe(a, b)) broken.push_back("translation");
  if (mpjpe(moved, a) != 0.0) broken.push_back("self-translation");

  // One non-root joint off by a 3-4-5 triangle: 5 / 16 mm.
  Pose3D c = a;
  c[kLeftWrist] = c[kLeftWrist] + Vec3{3, 4, 0};
  if (mpjpe(c, a) != 0.3125) broken.push_back("0.3125 hand case");

  // PCKh boundary pair at head size 60, tau 0.5 (threshold 30 px).
  Pose2D gt{};
  for (int j = 0; j < kNumJoints; ++j) gt[j] = {100.0 + 7 * j, 200.0 - 3 * j};
  Pose2D near = gt, far = gt;
  near[kRightElbow] = near[kRightElbow] + Vec2{20, 21};  // 29 px
  far[kRightElbow] = far[kRightElbow] + Vec2{31, 0};
  if (!pckh(near, gt, 60.0, 0.5)[kRightElbow]) broken.push_back("29 px hit");
  if (pckh(far, gt, 60.0, 0.5)[kRightElbow]) broken.push_back("31 px miss");

  // Hit counts never decrease with tau.
  std::mt19937_64 rng(77);
  std::normal_distribution<double> noise(0, 20);
  for (int t = 0; t < 200; ++t) {
    Pose2D p = gt;
    for (auto& j : p) j = j + Vec2{noise(rng), noise(rng)};
    int prev = -1;
    for (int k = 1; k <= 60; ++k) {
      const auto h = pckh(p, gt, 40.0, 0.05 * k);
      const int count = static_cast<int>(std::count(h.begin(), h.end(), true));
      if (count < prev) {
        broken.push_back("monotonicity");
        t = 200;
        break;
      }
      prev = count;
    }
  }
  std::string detail = broken.empty() ? "translation, 0.3125 mm, 29/31 px, tau monotonicity exact"
                                      : "broken:";
  for (const auto& b : broken) detail += " " + b;
  report(broken.empty(), "metrics_unit_suite", detail);
}

// ---- CLI determinism ----

int sh(const fs::path& dir, const std::string& args) {
  const std::string cmd =
      "cd '" + dir.string() + "' && '" SKELPOSE_CLI "' " + args + " >>run.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Every primary output under dir, keyed by relative path; manifests and logs excluded.
std::map<std::string, std::string> outputs(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name == "run.log" || name.find("manifest.json") != std::string::npos) continue;
    files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

void pipeline_determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> steps{
      "synth --n 16 --seed 11 --out ds.json --detections-out det.json --det-noise 2 --det-seed 5",
      "render --dataset ds.json --config h36m --canvas 32 --out maps",
      "train --kind regressor --dataset ds.json --config h36m --canvas 32 --iters 500 --batch 8 --seed 3 --out models",
      "infer --dataset ds.json --models models --out hyp.json",
      "match --hypotheses hyp.json --dataset ds.json --detections det.json --out match.csv",
      "eval --dataset ds.json --predictions match.predictions.json --out report.csv",
  };
  std::vector<std::map<std::string, std::string>> runs;
  std::string failed;
  for (int r = 0; r < 2 && failed.empty(); ++r) {
    const auto dir = fs::temp_directory_path() / ("skelpose_accept_run" + std::to_string(r));
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& step : steps) {
      if (sh(dir, step) != 0) {
        failed = step;
        break;
      }
    }
    runs.push_back(outputs(dir));
  }
  const double s = seconds_since(t0);
  if (!failed.empty()) {
    report(false, "cli_pipeline_determinism", "step failed: " + failed);
    return;
  }
  size_t differing = 0;
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    differing += it == runs[1].end() || it->second != bytes;
  }
  differing += runs[0].size() != runs[1].size();
  report(differing == 0 && s < kPipelineSeconds, "cli_pipeline_determinism",
         fmt("%.0f output files, %.0f differ; two runs in %.1f s (limit %.0f s)",
             static_cast<double>(runs[0].size()), static_cast<double>(differing), s,
             kPipelineSeconds));
}

}  // namespace

int main(int argc, char** argv) {
  // Optional filter: run only criteria whose name contains argv[1].
  const std::string only = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<void()>>> criteria{
      {"renderer", renderer_equivalence},     {"occlusion", occlusion_semantics},
      {"gradient", gradient_suite},           {"maps", maps_beat_images},
      {"hypothesis", hypothesis_ordering},    {"metrics", metrics_suite},
      {"pipeline", pipeline_determinism},
  };
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && name.find(only) == std::string::npos) continue;
    try {
      run();
    } catch (const std::exception& e) {
      report(false, name, std::string("exception: ") + e.what());
    }
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

#include "skelpose/dataio.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "skelpose/error.hpp"
#include "skelpose/io.hpp"

namespace skelpose {

using nlohmann::json;

std::string split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ParseError("split: unknown value '" + std::string(name) + "'");
}

const Sample* Dataset::find(std::string_view id) const {
  for (const auto& s : samples) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

Sample* Dataset::find(std::string_view id) {
  return const_cast<Sample*>(static_cast<const Dataset&>(*this).find(id));
}

void validate(const Sample& s) {
  const std::string where = "sample '" + s.id + "': ";
  if (s.id.empty()) throw PreconditionError("sample id must not be empty");
  if (!(s.head_size > 0.0)) throw PreconditionError(where + "head_size must be positive");
  if (!(s.person_scale > 0.0)) throw PreconditionError(where + "person_scale must be positive");
  if (!(s.camera.fx > 0.0 && s.camera.fy > 0.0)) {
    throw PreconditionError(where + "camera focal lengths must be positive");
  }
  if (!(s.residual_tol >= 0.0)) throw PreconditionError(where + "residual_tol must be >= 0");
  for (const Vec2& p : s.joints2d) {
    if (!std::isfinite(p.u) || !std::isfinite(p.v)) {
      throw PreconditionError(where + "joints2d must be finite");
    }
  }
  if (s.joints3d) {
    for (const Vec3& p : *s.joints3d) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
        throw PreconditionError(where + "joints3d must be finite");
      }
    }
    double residual = 0.0;
    try {
      residual = max_reprojection_residual(s.camera, *s.joints3d, s.joints2d);
    } catch (const DomainError& e) {
      throw PreconditionError(where + "joints3d: " + e.what());
    }
    if (residual > s.residual_tol) {
      throw PreconditionError(where + "joints3d reprojects " + std::to_string(residual) +
                              " px from joints2d (tolerance " + std::to_string(s.residual_tol) + ")");
    }
  }
}

void validate(const Dataset& d) {
  std::set<std::string> ids;
  for (const auto& s : d.samples) {
    if (!ids.insert(s.id).second) throw ParseError("duplicate sample id '" + s.id + "'");
    validate(s);
  }
}

json pose3d_to_json(const Pose3D& pose) {
  json a = json::array();
  for (const Vec3& p : pose) a.push_back({p.x, p.y, p.z});
  return a;
}

json pose2d_to_json(const Pose2D& pose) {
  json a = json::array();
  for (const Vec2& p : pose) a.push_back({p.u, p.v});
  return a;
}

namespace {

const json& field(const json& j, const char* name, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(where + ": missing field '" + name + "'");
  return *it;
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(where + ": non-finite number");
  return v;
}

std::vector<double> numbers(const json& j, size_t count, const std::string& where) {
  if (!j.is_array() || j.size() != count) {
    throw ParseError(where + ": expected an array of " + std::to_string(count) + " numbers");
  }
  std::vector<double> out;
  for (size_t i = 0; i < count; ++i) out.push_back(number(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

void check_joint_array(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != kNumJoints) {
    throw ParseError(where + ": expected " + std::to_string(kNumJoints) + " joints");
  }
}

}  // namespace

Pose3D pose3d_from_json(const json& j, const std::string& where) {
  check_joint_array(j, where);
  Pose3D pose;
  for (int k = 0; k < kNumJoints; ++k) {
    const auto v = numbers(j[k], 3, where + "[" + std::to_string(k) + "]");
    pose[k] = {v[0], v[1], v[2]};
  }
  return pose;
}

Pose2D pose2d_from_json(const json& j, const std::string& where) {
  check_joint_array(j, where);
  Pose2D pose;
  for (int k = 0; k < kNumJoints; ++k) {
    const auto v = numbers(j[k], 2, where + "[" + std::to_string(k) + "]");
    pose[k] = {v[0], v[1]};
  }
  return pose;
}

json sample_to_json(const Sample& s) {
  json j;
  j["id"] = s.id;
  j["image_ref"] = s.image_ref ? json(*s.image_ref) : json(nullptr);
  j["center"] = {s.center.u, s.center.v};
  j["person_scale"] = s.person_scale;
  j["camera"] = {{"fx", s.camera.fx}, {"fy", s.camera.fy}, {"cx", s.camera.cx}, {"cy", s.camera.cy}};
  j["joints2d"] = pose2d_to_json(s.joints2d);
  j["joints3d"] = s.joints3d ? pose3d_to_json(*s.joints3d) : json(nullptr);
  j["head_size"] = s.head_size;
  j["pseudo_gt"] = s.pseudo_gt;
  j["residual_tol"] = s.residual_tol;
  j["revision"] = s.revision;
  return j;
}

Sample sample_from_json(const json& j, const std::string& where) {
  Sample s;
  const json& id = field(j, "id", where);
  if (!id.is_string()) throw ParseError(where + ".id: expected a string");
  s.id = id.get<std::string>();
  if (auto it = j.find("image_ref"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError(where + ".image_ref: expected a string");
    s.image_ref = it->get<std::string>();
  }
  const auto c = numbers(field(j, "center", where), 2, where + ".center");
  s.center = {c[0], c[1]};
  s.person_scale = number(field(j, "person_scale", where), where + ".person_scale");
  const json& cam = field(j, "camera", where);
  const std::string cw = where + ".camera";
  s.camera = {number(field(cam, "fx", cw), cw + ".fx"), number(field(cam, "fy", cw), cw + ".fy"),
              number(field(cam, "cx", cw), cw + ".cx"), number(field(cam, "cy", cw), cw + ".cy")};
  s.joints2d = pose2d_from_json(field(j, "joints2d", where), where + ".joints2d");
  if (auto it = j.find("joints3d"); it != j.end() && !it->is_null()) {
    s.joints3d = pose3d_from_json(*it, where + ".joints3d");
  }
  s.head_size = number(field(j, "head_size", where), where + ".head_size");
  if (auto it = j.find("pseudo_gt"); it != j.end()) {
    if (!it->is_boolean()) throw ParseError(where + ".pseudo_gt: expected a boolean");
    s.pseudo_gt = it->get<bool>();
  }
  if (auto it = j.find("residual_tol"); it != j.end()) {
    s.residual_tol = number(*it, where + ".residual_tol");
  }
  if (auto it = j.find("revision"); it != j.end()) {
    if (!it->is_number_integer()) throw ParseError(where + ".revision: expected an integer");
    s.revision = it->get<int>();
  }
  return s;
}

json dataset_to_json(const Dataset& d) {
  json samples = json::array();
  for (const auto& s : d.samples) samples.push_back(sample_to_json(s));
  return {{"format", "skelpose-dataset"},
          {"version", 1},
          {"split", split_name(d.split)},
          {"skeleton", d.skeleton},
          {"samples", samples}};
}

Dataset dataset_from_json(const json& j) {
  Dataset d;
  if (auto it = j.find("split"); j.is_object() && it != j.end()) {
    if (!it->is_string()) throw ParseError("dataset.split: expected a string");
    d.split = parse_split(it->get<std::string>());
  }
  if (auto it = j.find("skeleton"); j.is_object() && it != j.end() && it->is_string()) {
    d.skeleton = it->get<std::string>();
  }
  const json& samples = field(j, "samples", "dataset");
  if (!samples.is_array()) throw ParseError("dataset.samples: expected an array");
  for (size_t i = 0; i < samples.size(); ++i) {
    d.samples.push_back(sample_from_json(samples[i], "samples[" + std::to_string(i) + "]"));
  }
  validate(d);
  return d;
}

json load_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Turn the byte offset into a line number.
    size_t line = 1;
    for (size_t i = 0; i < std::min(e.byte, text.size()); ++i) line += text[i] == '\n' ? 1 : 0;
    throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
}

void save_json(const json& doc, const std::filesystem::path& path) {
  atomic_write_file(path, doc.dump(1) + "\n");
}

Dataset load_dataset(const std::filesystem::path& path) {
  try {
    return dataset_from_json(load_json(path));
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0) throw;
    throw ParseError(path.string() + ": " + msg);
  }
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  save_json(dataset_to_json(dataset), path);
}

// ---- synthesis ----

std::array<double, kNumBones> default_bone_lengths() {
  // thorax-pelvis, pelvis-hips, thighs/shins (r, l), neck, head, clavicles, arms.
  return {420.0, 110.0, 110.0, 440.0, 420.0, 440.0, 420.0,
          120.0, 200.0, 170.0, 170.0, 290.0, 250.0, 290.0, 250.0};
}

Camera default_camera() { return {1000.0, 1000.0, 500.0, 500.0}; }

namespace {

struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        r.m[3 * i + j] = 0.0;
        for (int k = 0; k < 3; ++k) r.m[3 * i + j] += m[3 * i + k] * o.m[3 * k + j];
      }
    return r;
  }
};

// Rodrigues rotation about a unit axis.
Mat3 axis_angle(const Vec3& a, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  Mat3 r;
  r.m = {t * a.x * a.x + c,       t * a.x * a.y - s * a.z, t * a.x * a.z + s * a.y,
         t * a.x * a.y + s * a.z, t * a.y * a.y + c,       t * a.y * a.z - s * a.x,
         t * a.x * a.z - s * a.y, t * a.y * a.z + s * a.x, t * a.z * a.z + c};
  return r;
}

Vec3 random_axis(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    const Vec3 v{g(rng), g(rng), g(rng)};
    const double n = norm(v);
    if (n > 1e-9) return (1.0 / n) * v;
  }
}

struct BoneRest {
  Vec3 direction;
  double max_angle;  // radians
};

// Camera-aligned rest pose (y down, subject facing the camera) with
// per-bone rotation bounds.
constexpr std::array<BoneRest, kNumBones> kRest = {{
    {{0, 1, 0}, 0.25},   // thorax -> pelvis
    {{-1, 0, 0}, 0.15},  // pelvis -> r-hip
    {{1, 0, 0}, 0.15},   // pelvis -> l-hip
    {{0, 1, 0}, 0.8},    // r-hip -> r-knee
    {{0, 1, 0}, 0.8},    // r-knee -> r-ankle
    {{0, 1, 0}, 0.8},    // l-hip -> l-knee
    {{0, 1, 0}, 0.8},    // l-knee -> l-ankle
    {{0, -1, 0}, 0.25},  // thorax -> upper-neck
    {{0, -1, 0}, 0.35},  // upper-neck -> head-top
    {{-1, 0, 0}, 0.2},   // thorax -> r-shoulder
    {{1, 0, 0}, 0.2},    // thorax -> l-shoulder
    {{0, 1, 0}, 1.3},    // r-shoulder -> r-elbow
    {{0, 1, 0}, 1.1},    // r-elbow -> r-wrist
    {{0, 1, 0}, 1.3},    // l-shoulder -> l-elbow
    {{0, 1, 0}, 1.1},    // l-elbow -> l-wrist
}};

}  // namespace

Dataset synth_dataset(int n, std::uint64_t seed, const Camera& camera,
                      const std::array<double, kNumBones>& bone_lengths) {
  if (n < 1) throw PreconditionError("synth_dataset: n must be >= 1");
  for (double l : bone_lengths) {
    if (!(l > 0.0)) throw PreconditionError("synth_dataset: bone lengths must be positive");
  }
  const SkeletonModel& model = standard_model();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset d;
  d.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Mat3 global = axis_angle({0, 1, 0}, (2.0 * unit(rng) - 1.0) * std::numbers::pi) *
                        axis_angle({1, 0, 0}, (2.0 * unit(rng) - 1.0) * 0.2);
    Pose3D pose{};
    std::array<Mat3, kNumJoints> frame;
    pose[kThorax] = {(2.0 * unit(rng) - 1.0) * 300.0, (2.0 * unit(rng) - 1.0) * 200.0,
                     2000.0 + 2000.0 * unit(rng)};
    frame[kThorax] = global;
    // Bones are listed parent-before-child.
    for (int b = 0; b < kNumBones; ++b) {
      const Bone& bone = model.bones[b];
      const Vec3 axis = random_axis(rng);
      const double angle = kRest[b].max_angle * unit(rng);
      frame[bone.child] = frame[bone.parent] * axis_angle(axis, angle);
      pose[bone.child] = pose[bone.parent] + frame[bone.child] * (bone_lengths[b] * kRest[b].direction);
    }

    Sample s;
    char id[32];
    std::snprintf(id, sizeof id, "s%05d", i);
    s.id = id;
    s.camera = camera;
    s.joints3d = pose;
    s.joints2d = project_pose(camera, pose);
    double lo_u = s.joints2d[0].u, hi_u = lo_u, lo_v = s.joints2d[0].v, hi_v = lo_v;
    for (const Vec2& p : s.joints2d) {
      lo_u = std::min(lo_u, p.u);
      hi_u = std::max(hi_u, p.u);
      lo_v = std::min(lo_v, p.v);
      hi_v = std::max(hi_v, p.v);
    }
    s.center = {0.5 * (lo_u + hi_u), 0.5 * (lo_v + hi_v)};
    s.person_scale = 1.2 * std::max(hi_u - lo_u, hi_v - lo_v) / kPersonScalePixels;
    s.head_size = std::max(1.0, norm(s.joints2d[kHeadTop] - s.joints2d[kUpperNeck]));
    d.samples.push_back(std::move(s));
  }
  return d;
}

SkeletonMapPair render_sample(const Sample& sample, const MapConfig& config) {
  if (!sample.joints3d) throw PreconditionError("sample '" + sample.id + "' has no joints3d");
  const auto window =
      crop_window(sample.center, sample.person_scale, config.crop_scale, config.canvas_size);
  return render_pair(standard_model(), *sample.joints3d, sample.camera, window, config);
}

std::vector<float> sample_image(const Sample& sample, const MapConfig& config, std::uint64_t seed) {
  if (!sample.joints3d) throw PreconditionError("sample '" + sample.id + "' has no joints3d");
  const auto window =
      crop_window(sample.center, sample.person_scale, config.crop_scale, config.canvas_size);
  return render_person_image(standard_model(), *sample.joints3d, sample.camera, window,
                             config.canvas_size, seed);
}

// ---- detections ----

std::vector<Detection> detections_from_dataset(const Dataset& dataset, double noise_px,
                                               std::uint64_t seed) {
  if (!(noise_px >= 0.0)) throw DomainError("detection noise must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Detection> out;
  for (const auto& s : dataset.samples) {
    Detection det{s.id, s.joints2d};
    if (noise_px > 0.0) {
      for (Vec2& p : det.joints2d) {
        p.u += noise_px * g(rng);
        p.v += noise_px * g(rng);
      }
    }
    out.push_back(det);
  }
  return out;
}

json detections_to_json(const std::vector<Detection>& detections) {
  json a = json::array();
  for (const auto& d : detections) {
    a.push_back({{"sample_id", d.sample_id}, {"joints2d", pose2d_to_json(d.joints2d)}});
  }
  return a;
}

std::vector<Detection> detections_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("detections: expected an array");
  std::vector<Detection> out;
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string where = "detections[" + std::to_string(i) + "]";
    const json& id = field(j[i], "sample_id", where);
    if (!id.is_string()) throw ParseError(where + ".sample_id: expected a string");
    out.push_back({id.get<std::string>(),
                   pose2d_from_json(field(j[i], "joints2d", where), where + ".joints2d")});
  }
  return out;
}

// ---- hypotheses ----

json hypotheses_to_json(const std::vector<SampleHypotheses>& all) {
  json samples = json::array();
  for (const auto& sh : all) {
    json entries = json::array();
    for (const auto& h : sh.hypotheses.entries) {
      entries.push_back({{"config", config_to_json(h.config)},
                         {"source", h.source},
                         {"joints3d", pose3d_to_json(h.pose)}});
    }
    samples.push_back({{"sample_id", sh.sample_id}, {"hypotheses", entries}});
  }
  return {{"format", "skelpose-hypotheses"}, {"version", 1}, {"samples", samples}};
}

std::vector<SampleHypotheses> hypotheses_from_json(const json& j) {
  const json& samples = field(j, "samples", "hypotheses");
  if (!samples.is_array()) throw ParseError("hypotheses.samples: expected an array");
  std::vector<SampleHypotheses> out;
  for (size_t i = 0; i < samples.size(); ++i) {
    const std::string where = "hypotheses.samples[" + std::to_string(i) + "]";
    SampleHypotheses sh;
    sh.sample_id = field(samples[i], "sample_id", where).get<std::string>();
    const json& entries = field(samples[i], "hypotheses", where);
    if (!entries.is_array()) throw ParseError(where + ".hypotheses: expected an array");
    for (size_t k = 0; k < entries.size(); ++k) {
      const std::string ew = where + ".hypotheses[" + std::to_string(k) + "]";
      Hypothesis h;
      try {
        h.config = config_from_json(field(entries[k], "config", ew));
      } catch (const Error& e) {
        throw ParseError(ew + ".config: " + e.what());
      }
      h.source = entries[k].value("source", "");
      h.pose = pose3d_from_json(field(entries[k], "joints3d", ew), ew + ".joints3d");
      sh.hypotheses.entries.push_back(std::move(h));
    }
    out.push_back(std::move(sh));
  }
  return out;
}

// ---- predictions ----

json predictions_to_json(const std::vector<Prediction>& predictions) {
  json a = json::array();
  for (const auto& p : predictions) {
    a.push_back({{"sample_id", p.sample_id},
                 {"joints3d", p.joints3d ? pose3d_to_json(*p.joints3d) : json(nullptr)},
                 {"joints2d", p.joints2d ? pose2d_to_json(*p.joints2d) : json(nullptr)}});
  }
  return a;
}

std::vector<Prediction> predictions_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("predictions: expected an array");
  std::vector<Prediction> out;
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string where = "predictions[" + std::to_string(i) + "]";
    Prediction p;
    p.sample_id = field(j[i], "sample_id", where).get<std::string>();
    if (auto it = j[i].find("joints3d"); it != j[i].end() && !it->is_null()) {
      p.joints3d = pose3d_from_json(*it, where + ".joints3d");
    }
    if (auto it = j[i].find("joints2d"); it != j[i].end() && !it->is_null()) {
      p.joints2d = pose2d_from_json(*it, where + ".joints2d");
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace skelpose

#include "skelpose/metrics.hpp"

#include <cstdio>

#include "skelpose/error.hpp"

namespace skelpose {

double mpjpe(std::span<const Vec3> pred, std::span<const Vec3> gt, int root) {
  if (pred.size() != gt.size()) {
    throw ShapeError("mpjpe: joint counts differ (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(gt.size()) + ")");
  }
  if (pred.empty() || root < 0 || static_cast<size_t>(root) >= pred.size()) {
    throw DomainError("mpjpe: root index out of range");
  }
  const Vec3 pr = pred[root];
  const Vec3 gr = gt[root];
  double total = 0.0;
  for (size_t j = 0; j < pred.size(); ++j) total += norm((pred[j] - pr) - (gt[j] - gr));
  return total / static_cast<double>(pred.size());
}

double mpjpe(const Pose3D& pred, const Pose3D& gt, int root) {
  return mpjpe(std::span<const Vec3>(pred), std::span<const Vec3>(gt), root);
}

JointHits pckh(const Pose2D& pred, const Pose2D& gt, double norm_length, double tau) {
  if (!(norm_length > 0.0)) throw DomainError("pckh: norm_length must be positive");
  if (!(tau > 0.0)) throw DomainError("pckh: tau must be positive");
  JointHits hits{};
  const double threshold = tau * norm_length;
  for (int j = 0; j < kNumJoints; ++j) hits[j] = norm(pred[j] - gt[j]) <= threshold;
  return hits;
}

const std::vector<JointGroup>& pckh_groups() {
  static const std::vector<JointGroup> groups = {
      {"Head", {kUpperNeck, kHeadTop}},
      {"Sho.", {kRightShoulder, kLeftShoulder}},
      {"Elb.", {kRightElbow, kLeftElbow}},
      {"Wri.", {kRightWrist, kLeftWrist}},
      {"Hip", {kRightHip, kLeftHip}},
      {"Knee", {kRightKnee, kLeftKnee}},
      {"Ank.", {kRightAnkle, kLeftAnkle}},
      {"Mean", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}},
  };
  return groups;
}

EvalReport aggregate(std::span<const SampleEval> samples) {
  if (samples.empty()) throw PreconditionError("aggregate: no samples");
  EvalReport report;
  report.per_sample.assign(samples.begin(), samples.end());
  double mpjpe_sum = 0.0;
  size_t mpjpe_count = 0;
  std::array<size_t, kNumJoints> joint_hits{};
  size_t hit_samples = 0;
  for (const auto& s : samples) {
    if (s.mpjpe_mm) {
      mpjpe_sum += *s.mpjpe_mm;
      ++mpjpe_count;
    }
    if (s.hits) {
      ++hit_samples;
      for (int j = 0; j < kNumJoints; ++j) joint_hits[j] += (*s.hits)[j] ? 1 : 0;
    }
  }
  if (mpjpe_count) report.mean_mpjpe_mm = mpjpe_sum / static_cast<double>(mpjpe_count);
  if (hit_samples) {
    for (const auto& g : pckh_groups()) {
      size_t hits = 0;
      for (int j : g.joints) hits += joint_hits[j];
      report.pckh.push_back(
          {g.name, 100.0 * static_cast<double>(hits) / static_cast<double>(hit_samples * g.joints.size())});
    }
  }
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double hit_percent(const JointHits& hits) {
  int n = 0;
  for (bool h : hits) n += h ? 1 : 0;
  return 100.0 * n / kNumJoints;
}

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::string out = "sample_id,mpjpe_mm,pckh_percent\n";
  for (const auto& s : report.per_sample) {
    out += s.id + "," + (s.mpjpe_mm ? fmt(*s.mpjpe_mm) : "") + "," +
           (s.hits ? fmt(hit_percent(*s.hits)) : "") + "\n";
  }
  const std::string mean_pckh = report.pckh.empty() ? "" : fmt(report.pckh.back().pckh_percent);
  out += "MEAN," + (report.mean_mpjpe_mm ? fmt(*report.mean_mpjpe_mm) : "") + "," + mean_pckh + "\n";
  return out;
}

nlohmann::json report_json(const EvalReport& report) {
  auto per = nlohmann::json::array();
  for (const auto& s : report.per_sample) {
    nlohmann::json e = {{"id", s.id}};
    e["mpjpe_mm"] = s.mpjpe_mm ? nlohmann::json(*s.mpjpe_mm) : nlohmann::json(nullptr);
    if (s.hits) {
      e["pckh_hits"] = std::vector<bool>(s.hits->begin(), s.hits->end());
    } else {
      e["pckh_hits"] = nullptr;
    }
    per.push_back(std::move(e));
  }
  nlohmann::json agg;
  agg["mean_mpjpe_mm"] =
      report.mean_mpjpe_mm ? nlohmann::json(*report.mean_mpjpe_mm) : nlohmann::json(nullptr);
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& g : report.pckh) groups[g.name] = g.pckh_percent;
  agg["pckh_percent"] = groups;
  return {{"per_sample", per}, {"aggregate", agg}};
}

}  // namespace skelpose

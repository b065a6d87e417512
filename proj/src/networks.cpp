#include "skelpose/networks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "skelpose/error.hpp"

namespace skelpose {

NetworkSpec default_generator_spec(int input_size) {
  NetworkSpec s;
  s.kind = NetworkKind::kGenerator;
  s.input_size = input_size;
  s.input_channels = 3;
  s.widths = {8, 16, 32};
  s.num_stages = 3;
  s.num_intermediate_heads = 2;
  s.output_dim = 0;
  return s;
}

NetworkSpec default_regressor_spec(int input_size) {
  NetworkSpec s;
  s.kind = NetworkKind::kRegressor;
  s.input_size = input_size;
  s.input_channels = kMapChannels;
  s.widths = {8, 16, 32};
  s.num_stages = 3;
  s.num_intermediate_heads = 0;
  s.output_dim = kPoseOutputs;
  return s;
}

void validate(const NetworkSpec& spec) {
  if (spec.num_stages < 2) throw PreconditionError("network needs at least 2 stages");
  if (static_cast<int>(spec.widths.size()) != spec.num_stages) {
    throw PreconditionError("network needs one width per stage");
  }
  for (int w : spec.widths) {
    if (w < 1) throw PreconditionError("stage widths must be positive");
  }
  if (spec.input_channels < 1) throw PreconditionError("input_channels must be positive");
  if (spec.kind == NetworkKind::kGenerator) {
    const int f = 1 << (spec.num_stages - 1);
    if (spec.input_size < f || spec.input_size % f != 0) {
      throw PreconditionError("generator input_size must be a multiple of 2^(stages-1)");
    }
    if (spec.num_intermediate_heads < 0 || spec.num_intermediate_heads > spec.num_stages - 1) {
      throw PreconditionError("generator intermediate heads must lie in [0, stages-1]");
    }
  } else {
    if (spec.output_dim != kPoseOutputs) throw PreconditionError("regressor output_dim must be 48");
    if (spec.input_size < 2) throw PreconditionError("regressor input_size too small");
    if (!(spec.output_scale_mm > 0.0)) throw PreconditionError("output_scale_mm must be positive");
  }
}

nlohmann::json spec_to_json(const NetworkSpec& spec) {
  return {{"kind", spec.kind == NetworkKind::kGenerator ? "generator" : "regressor"},
          {"input_size", spec.input_size},
          {"input_channels", spec.input_channels},
          {"widths", spec.widths},
          {"num_stages", spec.num_stages},
          {"num_intermediate_heads", spec.num_intermediate_heads},
          {"output_dim", spec.output_dim},
          {"output_scale_mm", spec.output_scale_mm}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "generator") {
      s.kind = NetworkKind::kGenerator;
    } else if (kind == "regressor") {
      s.kind = NetworkKind::kRegressor;
    } else {
      throw ParseError("network spec: unknown kind " + kind);
    }
    s.input_size = j.at("input_size").get<int>();
    s.input_channels = j.at("input_channels").get<int>();
    s.widths = j.at("widths").get<std::vector<int>>();
    s.num_stages = j.at("num_stages").get<int>();
    s.num_intermediate_heads = j.at("num_intermediate_heads").get<int>();
    s.output_dim = j.at("output_dim").get<int>();
    s.output_scale_mm = j.at("output_scale_mm").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("network spec: ") + e.what());
  }
  validate(s);
  return s;
}

namespace {

void add_conv(ParameterSet& params, const std::string& name, int in, int out, int k,
              std::mt19937_64& rng) {
  params.add(name + ".w", {out, in, k, k},
             glorot_uniform(static_cast<size_t>(out) * in * k * k, in * k * k, out * k * k, rng));
  params.add(name + ".b", {out}, std::vector<double>(out, 0.0));
}

Tensor apply_conv(const ParameterSet& p, const std::string& name, const Tensor& x, int stride,
                  int pad) {
  return conv2d(x, p.at(name + ".w"), p.at(name + ".b"), stride, pad);
}

std::string stage_name(const char* prefix, int i) { return prefix + std::to_string(i); }

}  // namespace

// ---- generator ----

Generator::Generator(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.kind != NetworkKind::kGenerator) throw PreconditionError("spec is not a generator");
  validate(spec_);
  std::mt19937_64 rng(seed);
  const auto& w = spec_.widths;
  const int stages = spec_.num_stages;
  add_conv(params_, "enc0", spec_.input_channels, w[0], 3, rng);
  for (int i = 1; i < stages; ++i) add_conv(params_, stage_name("enc", i), w[i - 1], w[i], 3, rng);
  add_conv(params_, stage_name("head", stages - 1), w[stages - 1], kMapChannels, 1, rng);
  for (int i = stages - 2; i >= 0; --i) {
    const std::string up = stage_name("up", i);
    params_.add(up + ".w", {w[i + 1], w[i], 4, 4}, bilinear_kernel(w[i + 1], w[i], 4));
    params_.add(up + ".b", {w[i]}, std::vector<double>(w[i], 0.0));
    add_conv(params_, stage_name("res", i) + "a", w[i], w[i], 3, rng);
    add_conv(params_, stage_name("res", i) + "b", w[i], w[i], 3, rng);
    add_conv(params_, stage_name("head", i), w[i], kMapChannels, 1, rng);
  }
}

std::vector<int> Generator::head_sizes() const {
  std::vector<int> sizes;
  const int first = spec_.num_stages - 1 - spec_.num_intermediate_heads;
  for (int i = spec_.num_stages - 1; i >= 0; --i) {
    if (spec_.num_stages - 1 - i >= first) sizes.push_back(spec_.input_size >> i);
  }
  return sizes;
}

std::vector<Tensor> Generator::forward(const Tensor& images) const {
  if (images.shape().size() != 4 || images.dim(1) != spec_.input_channels ||
      images.dim(2) != spec_.input_size || images.dim(3) != spec_.input_size) {
    throw ShapeError("generator input must be (N, " + std::to_string(spec_.input_channels) + ", " +
                     std::to_string(spec_.input_size) + ", " + std::to_string(spec_.input_size) +
                     "), got " + shape_string(images.shape()));
  }
  const int stages = spec_.num_stages;
  std::vector<Tensor> skips;
  Tensor f = relu(apply_conv(params_, "enc0", images, 1, 1));
  skips.push_back(f);
  for (int i = 1; i < stages; ++i) {
    f = relu(apply_conv(params_, stage_name("enc", i), f, 2, 1));
    skips.push_back(f);
  }
  // Heads are ordered coarse to fine; the first `skip` coarse ones are dropped.
  const int skip = stages - 1 - spec_.num_intermediate_heads;
  std::vector<Tensor> heads;
  int level = 0;
  auto emit = [&](const Tensor& features, int i) {
    if (level++ >= skip) heads.push_back(apply_conv(params_, stage_name("head", i), features, 1, 0));
  };
  emit(f, stages - 1);
  for (int i = stages - 2; i >= 0; --i) {
    const std::string up = stage_name("up", i);
    Tensor x = transposed_conv2d(f, params_.at(up + ".w"), params_.at(up + ".b"), 2, 1);
    x = residual_add(x, skips[i]);
    const std::string res = stage_name("res", i);
    Tensor r = apply_conv(params_, res + "b", relu(apply_conv(params_, res + "a", x, 1, 1)), 1, 1);
    f = relu(residual_add(x, r));
    emit(f, i);
  }
  return heads;
}

// ---- regressor ----

Regressor::Regressor(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.kind != NetworkKind::kRegressor) throw PreconditionError("spec is not a regressor");
  validate(spec_);
  std::mt19937_64 rng(seed);
  int in = spec_.input_channels;
  int size = spec_.input_size;
  for (int i = 0; i < spec_.num_stages; ++i) {
    add_conv(params_, stage_name("conv", i), in, spec_.widths[i], 3, rng);
    in = spec_.widths[i];
    size = (size + 1) / 2;
  }
  const int features = in * size * size;
  params_.add("fc.w", {spec_.output_dim, features},
              glorot_uniform(static_cast<size_t>(spec_.output_dim) * features, features,
                             spec_.output_dim, rng));
  params_.add("fc.b", {spec_.output_dim}, std::vector<double>(spec_.output_dim, 0.0));
}

Tensor Regressor::forward(const Tensor& maps) const {
  if (maps.shape().size() != 4 || maps.dim(1) != spec_.input_channels ||
      maps.dim(2) != spec_.input_size || maps.dim(3) != spec_.input_size) {
    throw ShapeError("regressor input must be (N, " + std::to_string(spec_.input_channels) + ", " +
                     std::to_string(spec_.input_size) + ", " + std::to_string(spec_.input_size) +
                     "), got " + shape_string(maps.shape()));
  }
  Tensor f = maps;
  for (int i = 0; i < spec_.num_stages; ++i) {
    f = relu(apply_conv(params_, stage_name("conv", i), f, 2, 1));
  }
  return linear(flatten(f), params_.at("fc.w"), params_.at("fc.b"));
}

Generator build_generator(const NetworkSpec& spec, std::uint64_t seed) { return {spec, seed}; }
Regressor build_regressor(const NetworkSpec& spec, std::uint64_t seed) { return {spec, seed}; }

// ---- training ----

TrainConfig default_generator_training() {
  TrainConfig c;
  c.base_lr = 0.00001;
  c.batch_size = 12;
  return c;
}

TrainConfig default_regressor_training() {
  TrainConfig c;
  c.base_lr = 0.01;
  c.batch_size = 32;
  return c;
}

std::string history_csv(const TrainResult& result) {
  std::string out = "iteration,loss,lr\n";
  char buf[96];
  for (const auto& r : result.history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.iteration, r.loss, r.lr);
    out += buf;
  }
  return out;
}

std::vector<float> map_input(const SkeletonMapPair& maps) {
  std::vector<float> v(maps.fore);
  v.insert(v.end(), maps.back.begin(), maps.back.end());
  return v;
}

RegressorSample make_regressor_sample(const SkeletonMapPair& maps, const Pose3D& pose) {
  return {map_input(maps), pose};
}

std::vector<double> area_downsample(std::span<const double> src, int channels, int size,
                                    int target_size) {
  if (target_size < 1 || size % target_size != 0) {
    throw ShapeError("area_downsample: target size must divide source size");
  }
  if (src.size() != static_cast<size_t>(channels) * size * size) {
    throw ShapeError("area_downsample: buffer does not match (C, S, S)");
  }
  const int f = size / target_size;
  const double inv = 1.0 / (f * f);
  std::vector<double> out(static_cast<size_t>(channels) * target_size * target_size);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < target_size; ++y)
      for (int x = 0; x < target_size; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) {
            acc += src[(static_cast<size_t>(c) * size + y * f + dy) * size + x * f + dx];
          }
        out[(static_cast<size_t>(c) * target_size + y) * target_size + x] = acc * inv;
      }
  return out;
}

Tensor generator_loss(const std::vector<Tensor>& heads, const std::vector<Tensor>& targets) {
  if (heads.empty() || heads.size() != targets.size()) {
    throw ShapeError("generator_loss: one target per head required");
  }
  Tensor total = sigmoid_cross_entropy(heads[0], targets[0]);
  for (size_t i = 1; i < heads.size(); ++i) {
    total = residual_add(total, sigmoid_cross_entropy(heads[i], targets[i]));
  }
  return total;
}

std::vector<std::vector<double>> generator_targets(const Generator& model,
                                                   const SkeletonMapPair& maps) {
  const int size = maps.size();
  if (size != model.spec().input_size) {
    throw ShapeError("ground-truth canvas " + std::to_string(size) +
                     " does not match generator input " + std::to_string(model.spec().input_size));
  }
  const auto input = map_input(maps);
  const std::vector<double> full(input.begin(), input.end());
  std::vector<std::vector<double>> out;
  for (int s : model.head_sizes()) out.push_back(area_downsample(full, kMapChannels, size, s));
  return out;
}

namespace {

// Cycles through seeded per-epoch permutations of [0, n).
class BatchSampler {
 public:
  BatchSampler(size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), size_t{0});
    reshuffle();
  }
  std::vector<size_t> next(int batch) {
    std::vector<size_t> out;
    for (int i = 0; i < batch; ++i) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<size_t> order_;
  std::mt19937_64 rng_;
  size_t pos_ = 0;
};

class PlateauSchedule {
 public:
  explicit PlateauSchedule(const TrainConfig& cfg) : cfg_(cfg), lr_(cfg.base_lr) {}
  double lr() const { return lr_; }
  void observe(double loss) {
    window_sum_ += loss;
    if (++window_count_ < cfg_.plateau_window) return;
    const double mean = window_sum_ / window_count_;
    if (has_previous_ && mean > (1.0 - cfg_.plateau_improvement) * previous_) {
      lr_ /= cfg_.lr_drop_factor;
    }
    previous_ = mean;
    has_previous_ = true;
    window_sum_ = 0.0;
    window_count_ = 0;
  }

 private:
  TrainConfig cfg_;
  double lr_;
  double window_sum_ = 0.0;
  int window_count_ = 0;
  double previous_ = 0.0;
  bool has_previous_ = false;
};

void validate(const TrainConfig& cfg) {
  if (!(cfg.base_lr > 0.0)) throw PreconditionError("base_lr must be positive");
  if (cfg.batch_size < 1) throw PreconditionError("batch_size must be >= 1");
  if (cfg.max_iterations < 0) throw PreconditionError("max_iterations must be >= 0");
  if (!(cfg.lr_drop_factor >= 1.0)) throw PreconditionError("lr_drop_factor must be >= 1");
  if (cfg.plateau_window < 1) throw PreconditionError("plateau_window must be >= 1");
}

template <typename StepFn>
TrainResult run_training(ParameterSet& params, size_t dataset_size, const TrainConfig& cfg,
                         StepFn&& loss_for_batch) {
  validate(cfg);
  BatchSampler sampler(dataset_size, cfg.seed);
  PlateauSchedule schedule(cfg);
  SgdState sgd{cfg.base_lr, cfg.momentum, cfg.weight_decay, {}};
  TrainResult result;
  result.history.reserve(cfg.max_iterations);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const auto batch = sampler.next(cfg.batch_size);
    params.zero_grad();
    const Tensor loss = loss_for_batch(batch);
    loss.backward();
    sgd.learning_rate = schedule.lr();
    sgd_step(sgd, params);
    result.history.push_back({it, loss.item(), sgd.learning_rate});
    schedule.observe(loss.item());
  }
  return result;
}

}  // namespace

TrainResult train_generator(Generator& model, std::span<const GeneratorSample> dataset,
                            const TrainConfig& cfg) {
  if (dataset.empty()) throw PreconditionError("train_generator: empty dataset");
  const int s = model.spec().input_size;
  const size_t image_len = 3 * static_cast<size_t>(s) * s;
  std::vector<std::vector<std::vector<double>>> targets;
  targets.reserve(dataset.size());
  for (size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].image.size() != image_len) {
      throw ShapeError("train_generator: sample " + std::to_string(i) + " image has wrong size");
    }
    if (dataset[i].maps.config != dataset[0].maps.config) {
      throw PreconditionError("train_generator: ground-truth maps use differing configs");
    }
    targets.push_back(generator_targets(model, dataset[i].maps));
  }
  const auto sizes = model.head_sizes();
  return run_training(model.parameters(), dataset.size(), cfg, [&](const std::vector<size_t>& batch) {
    const int n = static_cast<int>(batch.size());
    std::vector<double> images;
    images.reserve(n * image_len);
    std::vector<std::vector<double>> head_targets(sizes.size());
    for (size_t idx : batch) {
      images.insert(images.end(), dataset[idx].image.begin(), dataset[idx].image.end());
      for (size_t h = 0; h < sizes.size(); ++h) {
        head_targets[h].insert(head_targets[h].end(), targets[idx][h].begin(), targets[idx][h].end());
      }
    }
    std::vector<Tensor> target_tensors;
    for (size_t h = 0; h < sizes.size(); ++h) {
      target_tensors.push_back(
          Tensor::constant({n, kMapChannels, sizes[h], sizes[h]}, std::move(head_targets[h])));
    }
    const auto heads = model.forward(Tensor::constant({n, 3, s, s}, std::move(images)));
    return generator_loss(heads, target_tensors);
  });
}

TrainResult train_regressor(Regressor& model, std::span<const RegressorSample> dataset,
                            const TrainConfig& cfg) {
  if (dataset.empty()) throw PreconditionError("train_regressor: empty dataset");
  const auto& spec = model.spec();
  const size_t input_len =
      static_cast<size_t>(spec.input_channels) * spec.input_size * spec.input_size;
  for (size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].input.size() != input_len) {
      throw ShapeError("train_regressor: sample " + std::to_string(i) + " input has wrong size");
    }
    if (norm(dataset[i].target[kThorax]) > 1e-6) {
      throw PreconditionError("train_regressor: sample " + std::to_string(i) +
                              " target is not root-relative");
    }
  }
  const double inv_scale = 1.0 / spec.output_scale_mm;
  return run_training(model.parameters(), dataset.size(), cfg, [&](const std::vector<size_t>& batch) {
    const int n = static_cast<int>(batch.size());
    std::vector<double> inputs, targets;
    inputs.reserve(n * input_len);
    targets.reserve(static_cast<size_t>(n) * kPoseOutputs);
    for (size_t idx : batch) {
      inputs.insert(inputs.end(), dataset[idx].input.begin(), dataset[idx].input.end());
      for (const Vec3& j : dataset[idx].target) {
        targets.insert(targets.end(), {j.x * inv_scale, j.y * inv_scale, j.z * inv_scale});
      }
    }
    const Tensor out = model.forward(Tensor::constant(
        {n, spec.input_channels, spec.input_size, spec.input_size}, std::move(inputs)));
    return euclidean_loss(out, Tensor::constant({n, kPoseOutputs}, std::move(targets)));
  });
}

Pose3D infer_pose(const Regressor& model, std::span<const float> input) {
  const auto& spec = model.spec();
  const size_t len = static_cast<size_t>(spec.input_channels) * spec.input_size * spec.input_size;
  if (input.size() != len) {
    throw ShapeError("infer_pose: input has " + std::to_string(input.size()) + " values, model expects " +
                     std::to_string(len));
  }
  const Tensor out = model.forward(
      Tensor::constant({1, spec.input_channels, spec.input_size, spec.input_size},
                       std::vector<double>(input.begin(), input.end())));
  Pose3D pose;
  const auto v = out.data();
  for (int j = 0; j < kNumJoints; ++j) {
    pose[j] = {v[3 * j] * spec.output_scale_mm, v[3 * j + 1] * spec.output_scale_mm,
               v[3 * j + 2] * spec.output_scale_mm};
  }
  pose[kThorax] = {0.0, 0.0, 0.0};
  return pose;
}

Pose3D infer_pose(const Regressor& model, const SkeletonMapPair& maps) {
  if (model.spec().input_channels != kMapChannels || maps.size() != model.spec().input_size) {
    throw ShapeError("infer_pose: map canvas " + std::to_string(maps.size()) +
                     " does not match regressor input " + std::to_string(model.spec().input_size));
  }
  return infer_pose(model, map_input(maps));
}

SkeletonMapPair predict_maps(const Generator& model, std::span<const float> image,
                             const MapConfig& config) {
  const int s = model.spec().input_size;
  if (image.size() != 3 * static_cast<size_t>(s) * s) throw ShapeError("predict_maps: image size");
  if (config.canvas_size != s) throw ShapeError("predict_maps: config canvas differs from model");
  const auto heads =
      model.forward(Tensor::constant({1, 3, s, s}, std::vector<double>(image.begin(), image.end())));
  const Tensor probs = sigmoid(heads.back());
  const size_t n = 3 * static_cast<size_t>(s) * s;
  SkeletonMapPair pair{config, std::vector<float>(n), std::vector<float>(n)};
  for (size_t i = 0; i < n; ++i) {
    pair.fore[i] = static_cast<float>(probs.data()[i]);
    pair.back[i] = static_cast<float>(probs.data()[n + i]);
  }
  return pair;
}

void save_model(const std::filesystem::path& path, const ParameterSet& params,
                const NetworkSpec& spec, const MapConfig& config, std::uint64_t seed,
                int iterations) {
  save_checkpoint(path, params, seed, iterations,
                  {{"spec", spec_to_json(spec)}, {"map_config", config_to_json(config)}});
}

LoadedRegressor load_regressor(const std::filesystem::path& path) {
  const auto manifest = read_checkpoint_manifest(path);
  const auto& meta = manifest.at("meta");
  LoadedRegressor out{Regressor(spec_from_json(meta.at("spec")), 0),
                      config_from_json(meta.at("map_config"))};
  load_checkpoint(path, out.model.parameters());
  return out;
}

LoadedGenerator load_generator(const std::filesystem::path& path) {
  const auto manifest = read_checkpoint_manifest(path);
  const auto& meta = manifest.at("meta");
  LoadedGenerator out{Generator(spec_from_json(meta.at("spec")), 0),
                      config_from_json(meta.at("map_config"))};
  load_checkpoint(path, out.model.parameters());
  return out;
}

}  // namespace skelpose

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelpose/autodiff.hpp"
#include "skelpose/geometry.hpp"
#include "skelpose/renderer.hpp"

namespace skelpose {

enum class NetworkKind { kGenerator, kRegressor };

inline constexpr int kMapChannels = 6;
inline constexpr int kPoseOutputs = 3 * kNumJoints;

struct NetworkSpec {
  NetworkKind kind = NetworkKind::kRegressor;
  int input_size = 32;
  int input_channels = kMapChannels;
  std::vector<int> widths = {8, 16, 32};
  int num_stages = 3;
  // Generator only: supervised heads besides the finest one.
  int num_intermediate_heads = 2;
  // Regressor only.
  int output_dim = kPoseOutputs;
  // Regressor only: network outputs are poses in units of this many mm.
  double output_scale_mm = 1000.0;
};

NetworkSpec default_generator_spec(int input_size = 32);
NetworkSpec default_regressor_spec(int input_size = 32);
void validate(const NetworkSpec& spec);
nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

// Encoder–decoder: strided conv encoder, transposed-conv (bilinear init)
// decoder with additive skips and residual blocks, a 6-channel logit head at
// each decoder resolution.
class Generator {
 public:
  Generator(NetworkSpec spec, std::uint64_t seed);

  // images (N, 3, S, S) -> logits per head (N, 6, s_j, s_j), coarsest first.
  std::vector<Tensor> forward(const Tensor& images) const;
  std::vector<int> head_sizes() const;

  const NetworkSpec& spec() const { return spec_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

 private:
  NetworkSpec spec_;
  ParameterSet params_;
};

// Strided conv stages followed by one fully connected layer to 48 outputs.
class Regressor {
 public:
  Regressor(NetworkSpec spec, std::uint64_t seed);

  // maps (N, C, S, S) -> (N, 48) in units of spec.output_scale_mm.
  Tensor forward(const Tensor& maps) const;

  const NetworkSpec& spec() const { return spec_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

 private:
  NetworkSpec spec_;
  ParameterSet params_;
};

Generator build_generator(const NetworkSpec& spec, std::uint64_t seed);
Regressor build_regressor(const NetworkSpec& spec, std::uint64_t seed);

struct TrainConfig {
  double base_lr = 0.01;
  int batch_size = 32;
  int max_iterations = 1000;
  double lr_drop_factor = 10.0;
  std::uint64_t seed = 0;
  double momentum = 0.9;
  double weight_decay = 0.0002;
  // Every `plateau_window` iterations the window-mean loss must improve by
  // `plateau_improvement` (relative) over the previous window or lr drops.
  int plateau_window = 100;
  double plateau_improvement = 0.01;
};

// Generator defaults: lr 1e-5, batch 12. Regressor defaults: lr 0.01, batch 32.
TrainConfig default_generator_training();
TrainConfig default_regressor_training();

struct TrainRecord {
  int iteration = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<TrainRecord> history;
};

// CSV "iteration,loss,lr" with full-precision values.
std::string history_csv(const TrainResult& result);

struct GeneratorSample {
  std::vector<float> image;  // 3 × S × S
  SkeletonMapPair maps;      // ground truth on the same canvas
};

struct RegressorSample {
  std::vector<float> input;  // C × S × S
  Pose3D target;             // root-relative, mm
};

// fore channels then back channels.
std::vector<float> map_input(const SkeletonMapPair& maps);
RegressorSample make_regressor_sample(const SkeletonMapPair& maps, const Pose3D& root_relative_pose);

// Area-average downsampling of a channel-major (C, S, S) buffer to (C, s, s); S % s == 0.
std::vector<double> area_downsample(std::span<const double> src, int channels, int size,
                                    int target_size);

// Σ over heads of sigmoid cross entropy against area-downsampled targets.
Tensor generator_loss(const std::vector<Tensor>& heads, const std::vector<Tensor>& targets);
// Targets for every head of `model` from one ground-truth pair, batch of 1.
std::vector<std::vector<double>> generator_targets(const Generator& model,
                                                   const SkeletonMapPair& maps);

TrainResult train_generator(Generator& model, std::span<const GeneratorSample> dataset,
                            const TrainConfig& cfg);
TrainResult train_regressor(Regressor& model, std::span<const RegressorSample> dataset,
                            const TrainConfig& cfg);

// Root-relative pose in mm; the root joint is exactly (0, 0, 0).
Pose3D infer_pose(const Regressor& model, const SkeletonMapPair& maps);
Pose3D infer_pose(const Regressor& model, std::span<const float> input);

// sigmoid of the finest head, as a map pair with the given config.
SkeletonMapPair predict_maps(const Generator& model, std::span<const float> image,
                             const MapConfig& config);

// Checkpoint helpers storing the spec and map config in the manifest meta.
void save_model(const std::filesystem::path& path, const ParameterSet& params,
                const NetworkSpec& spec, const MapConfig& config, std::uint64_t seed,
                int iterations);
struct LoadedRegressor {
  Regressor model;
  MapConfig config;
};
struct LoadedGenerator {
  Generator model;
  MapConfig config;
};
LoadedRegressor load_regressor(const std::filesystem::path& path);
LoadedGenerator load_generator(const std::filesystem::path& path);

}  // namespace skelpose

#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "skelpose/autodiff.hpp"
#include "skelpose/dataio.hpp"
#include "skelpose/renderer.hpp"

namespace skelpose::testing {

// Random sticks on a canvas of `size`, endpoints allowed slightly off-canvas,
// occasional zero-length bones, distinct bone indices.
inline std::vector<Stick> random_scene(std::mt19937_64& rng, int size, int max_bones = kNumBones) {
  std::uniform_int_distribution<int> count(1, max_bones);
  std::uniform_real_distribution<double> pos(-4.0, size + 4.0), depth(500.0, 5000.0), unit(0, 1);
  const int n = count(rng);
  std::vector<int> bones(kNumBones);
  for (int i = 0; i < kNumBones; ++i) bones[i] = i;
  std::shuffle(bones.begin(), bones.end(), rng);
  std::vector<Stick> sticks;
  for (int i = 0; i < n; ++i) {
    Stick s;
    s.a = {pos(rng), pos(rng)};
    s.b = unit(rng) < 0.05 ? s.a : Vec2{pos(rng), pos(rng)};
    s.depth_a = depth(rng);
    s.depth_b = unit(rng) < 0.2 ? s.depth_a : depth(rng);
    s.bone = bones[i];
    sticks.push_back(s);
  }
  return sticks;
}

struct GradCheck {
  double max_rel_err = 0.0;
  size_t checked = 0;
};

// Central finite differences over every element of every input. `f` must
// rebuild the graph from the inputs on each call. Relative error uses a 1e-6
// absolute floor on the denominator.
inline GradCheck check_gradients(std::vector<Tensor> inputs,
                                 const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 double eps = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  f(inputs).backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    const auto g = t.grad();
    analytic.emplace_back(t.size(), 0.0);
    std::copy(g.begin(), g.end(), analytic.back().begin());
  }
  GradCheck out;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mutable_data();
    for (size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double up = f(inputs).item();
      data[i] = orig - eps;
      const double down = f(inputs).item();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      out.max_rel_err = std::max(out.max_rel_err, std::abs(a - numeric) / denom);
      ++out.checked;
    }
  }
  return out;
}

inline std::vector<double> random_values(std::mt19937_64& rng, size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// Redraws every parameter uniformly in [-0.5, 0.5] and returns handles to
// them. Structured inits (zero biases, bilinear kernels) put many ReLU inputs
// exactly at 0, where the derivative does not exist; gradient checks run at a
// generic point instead.
inline std::vector<Tensor> randomize_parameters(ParameterSet& params, std::mt19937_64& rng) {
  std::vector<Tensor> handles;
  for (auto& e : params.entries()) {
    auto data = e.tensor.mutable_data();
    const auto v = random_values(rng, data.size(), -0.5, 0.5);
    std::copy(v.begin(), v.end(), data.begin());
    handles.push_back(e.tensor);
  }
  return handles;
}

// Reduces any tensor to a scalar through a fixed random target so that every
// output element receives a distinct, nonzero upstream gradient.
inline Tensor probe_loss(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return euclidean_loss(y, Tensor::constant(y.shape(), random_values(rng, y.size())));
}

struct RenderedSample {
  SkeletonMapPair maps;
  std::vector<float> image;
  Pose3D root_relative;
};

// Ground-truth maps, a person image and the root-relative pose for each sample.
inline std::vector<RenderedSample> render_samples(const Dataset& ds, const MapConfig& config,
                                                  std::uint64_t image_seed = 0) {
  std::vector<RenderedSample> out;
  for (const auto& s : ds.samples) {
    RenderedSample r;
    r.maps = render_sample(s, config);
    r.image = sample_image(s, config, image_seed + out.size());
    r.root_relative = root_relative(*s.joints3d);
    out.push_back(std::move(r));
  }
  return out;
}

struct OpCase {
  const char* name;
  std::function<GradCheck(std::mt19937_64&)> run;
};

// One finite-difference check per differentiable op on random small shapes.
inline std::vector<OpCase> op_cases() {
  using R = std::mt19937_64;
  auto pick = [](R& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto param = [](R& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    const size_t n = numel(s);
    return Tensor::parameter(std::move(s), random_values(rng, n, lo, hi));
  };
  std::vector<OpCase> cases;
  cases.push_back({"conv2d", [=](R& rng) {
    const int c = pick(rng, 1, 3), oc = pick(rng, 1, 3), k = pick(rng, 1, 3), s = pick(rng, 1, 2);
    const int h = pick(rng, k + 1, 6), p = pick(rng, 0, k - 1);
    const std::uint64_t seed = rng();
    return check_gradients({param(rng, {pick(rng, 1, 2), c, h, h}), param(rng, {oc, c, k, k}),
                            param(rng, {oc})},
                           [=](const std::vector<Tensor>& in) {
                             return probe_loss(conv2d(in[0], in[1], in[2], s, p), seed);
                           });
  }});
  cases.push_back({"transposed_conv2d", [=](R& rng) {
    const int c = pick(rng, 1, 3), oc = pick(rng, 1, 3), k = pick(rng, 2, 4), s = pick(rng, 1, 2);
    const int h = pick(rng, 2, 5), p = pick(rng, 0, k / 2), op = pick(rng, 0, s - 1);
    const std::uint64_t seed = rng();
    return check_gradients({param(rng, {pick(rng, 1, 2), c, h, h}), param(rng, {c, oc, k, k}),
                            param(rng, {oc})},
                           [=](const std::vector<Tensor>& in) {
                             return probe_loss(transposed_conv2d(in[0], in[1], in[2], s, p, op), seed);
                           });
  }});
  cases.push_back({"residual_add", [=](R& rng) {
    const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), 3, 4};
    const std::uint64_t seed = rng();
    return check_gradients({param(rng, s), param(rng, s)}, [=](const std::vector<Tensor>& in) {
      return probe_loss(residual_add(in[0], in[1]), seed);
    });
  }});
  cases.push_back({"relu", [=](R& rng) {
    // Values kept away from the kink at 0.
    Shape s{2, pick(rng, 1, 3), 4, 4};
    std::vector<double> v = random_values(rng, numel(s), 0.05, 1.0);
    std::bernoulli_distribution neg(0.5);
    for (double& x : v) if (neg(rng)) x = -x;
    const std::uint64_t seed = rng();
    return check_gradients({Tensor::parameter(s, v)}, [=](const std::vector<Tensor>& in) {
      return probe_loss(relu(in[0]), seed);
    });
  }});
  cases.push_back({"sigmoid", [=](R& rng) {
    const std::uint64_t seed = rng();
    return check_gradients({param(rng, {2, 3, 3, 3}, -4, 4)}, [=](const std::vector<Tensor>& in) {
      return probe_loss(sigmoid(in[0]), seed);
    });
  }});
  cases.push_back({"linear", [=](R& rng) {
    const int n = pick(rng, 1, 3), i = pick(rng, 1, 6), o = pick(rng, 1, 5);
    const std::uint64_t seed = rng();
    return check_gradients({param(rng, {n, i}), param(rng, {o, i}), param(rng, {o})},
                           [=](const std::vector<Tensor>& in) {
                             return probe_loss(linear(in[0], in[1], in[2]), seed);
                           });
  }});
  cases.push_back({"max_pool", [=](R& rng) {
    // A permutation of well-separated values avoids ties inside a window.
    const Shape s{1, 2, 6, 6};
    std::vector<double> v(numel(s));
    for (size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i);
    std::shuffle(v.begin(), v.end(), rng);
    const int k = pick(rng, 2, 3);
    const std::uint64_t seed = rng();
    return check_gradients({Tensor::parameter(s, v)}, [=](const std::vector<Tensor>& in) {
      return probe_loss(max_pool(in[0], k, 2), seed);
    });
  }});
  cases.push_back({"upsample_nearest", [=](R& rng) {
    const int f = pick(rng, 2, 3);
    const std::uint64_t seed = rng();
    return check_gradients({param(rng, {1, 2, 3, 3})}, [=](const std::vector<Tensor>& in) {
      return probe_loss(upsample_nearest(in[0], f), seed);
    });
  }});
  cases.push_back({"concat_channels", [=](R& rng) {
    const int n = pick(rng, 1, 2);
    const std::uint64_t seed = rng();
    return check_gradients({param(rng, {n, 3, 3, 3}), param(rng, {n, pick(rng, 1, 3), 3, 3})},
                           [=](const std::vector<Tensor>& in) {
                             return probe_loss(concat_channels(in[0], in[1]), seed);
                           });
  }});
  cases.push_back({"flatten", [=](R& rng) {
    const std::uint64_t seed = rng();
    return check_gradients({param(rng, {2, 2, 3, 3})}, [=](const std::vector<Tensor>& in) {
      return probe_loss(flatten(in[0]), seed);
    });
  }});
  cases.push_back({"scale", [=](R& rng) {
    const double f = random_values(rng, 1, -3, 3)[0];
    const std::uint64_t seed = rng();
    return check_gradients({param(rng, {3, 4})}, [=](const std::vector<Tensor>& in) {
      return probe_loss(scale(in[0], f), seed);
    });
  }});
  cases.push_back({"sigmoid_cross_entropy", [=](R& rng) {
    const Shape s{2, 3, 3, 3};
    const auto t = Tensor::constant(s, random_values(rng, numel(s), 0.0, 1.0));
    return check_gradients({param(rng, s, -5, 5)}, [=](const std::vector<Tensor>& in) {
      return sigmoid_cross_entropy(in[0], t);
    });
  }});
  cases.push_back({"euclidean_loss", [=](R& rng) {
    const Shape s{pick(rng, 1, 4), 48};
    return check_gradients({param(rng, s), param(rng, s)}, [](const std::vector<Tensor>& in) {
      return euclidean_loss(in[0], in[1]);
    });
  }});
  return cases;
}

}  // namespace skelpose::testing

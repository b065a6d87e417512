#include "skelpose/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_set>

#include "skelpose/error.hpp"
#include "skelpose/io.hpp"
#include "skelpose/kernels.hpp"

namespace skelpose {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::span<double> ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::Node;

size_t numel(const Shape& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {

void check_shape(const Shape& shape, size_t values) {
  if (shape.empty() || shape.size() > 4) throw ShapeError("tensor rank must be 1..4");
  for (int d : shape) {
    if (d < 1) throw ShapeError("tensor dims must be positive: " + shape_string(shape));
  }
  if (numel(shape) != values) {
    throw ShapeError("tensor " + shape_string(shape) + " given " + std::to_string(values) +
                     " values");
  }
}

void check_finite(std::span<const double> v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NonFiniteError(std::string("non-finite value produced by ") + op);
  }
}

// Gradient buffer of a parent, or empty when it does not track gradients.
std::span<double> grad_of(const std::shared_ptr<Node>& p) {
  return p->requires_grad ? p->ensure_grad() : std::span<double>{};
}

}  // namespace

Node& node_of(const Tensor& t) {
  if (!t.node_) throw PreconditionError("use of undefined tensor");
  return *t.node_;
}

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents, const char* op,
               std::function<void(Node&)> backward_fn) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  for (const Tensor& p : parents) {
    if (p.defined() && p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const Tensor& p : parents) {
      if (p.defined()) node->parents.push_back(p.node_);
    }
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  check_shape(shape, values.size());
  check_finite(values, "constant");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) {
  const size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_of(*this).shape; }
size_t Tensor::size() const { return node_of(*this).value.size(); }
bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }
std::span<const double> Tensor::data() const { return node_of(*this).value; }
std::span<double> Tensor::mutable_data() { return node_of(*this).value; }
std::span<const double> Tensor::grad() const { return node_of(*this).grad; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor " + shape_string(shape()));
  return data()[0];
}

void Tensor::zero_grad() { node_of(*this).grad.clear(); }

Tensor Tensor::detach() const {
  return constant(shape(), std::vector<double>(data().begin(), data().end()));
}

void Tensor::backward() const {
  Node& root = node_of(*this);
  if (root.value.size() != 1) throw ShapeError("backward() needs a scalar tensor");
  if (!root.requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{&root, 0}};
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root.ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---- ops ----

namespace {

void require_rank(const Tensor& t, size_t rank, const char* op) {
  if (t.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (w.dim(1) != x.dim(1)) throw ShapeError("conv2d: weight in-channels != input channels");
  if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: kernel must be square");
  if (b.defined() && b.shape() != Shape{w.dim(0)}) throw ShapeError("conv2d: bias shape");
  const auto g = kernels::make_conv_geometry(x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0),
                                             w.dim(2), stride, pad);
  std::vector<double> y(g.output_size());
  kernels::conv2d_forward(g, x.data(), w.data(),
                          b.defined() ? b.data() : std::span<const double>{}, y);
  return make_op({g.batch, g.out_channels, g.out_h, g.out_w}, std::move(y), {x, w, b}, "conv2d",
                 [g, has_bias = b.defined()](Node& self) {
                   const auto& xp = self.parents[0];
                   const auto& wp = self.parents[1];
                   if (auto gx = grad_of(xp); !gx.empty()) {
                     kernels::conv2d_backward_input(g, self.grad, wp->value, gx);
                   }
                   std::span<double> gb = has_bias ? grad_of(self.parents[2]) : std::span<double>{};
                   std::span<double> gw = grad_of(wp);
                   std::vector<double> scratch;
                   if (gw.empty() && !gb.empty()) {
                     scratch.assign(wp->value.size(), 0.0);
                     gw = scratch;
                   }
                   if (!gw.empty()) kernels::conv2d_backward_weight(g, xp->value, self.grad, gw, gb);
                 });
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad,
                         int output_padding) {
  require_rank(x, 4, "transposed_conv2d");
  require_rank(w, 4, "transposed_conv2d");
  if (w.dim(0) != x.dim(1)) throw ShapeError("transposed_conv2d: weight dim 0 != input channels");
  if (w.dim(2) != w.dim(3)) throw ShapeError("transposed_conv2d: kernel must be square");
  if (stride < 1 || pad < 0) throw ShapeError("transposed_conv2d: bad stride/pad");
  if (output_padding < 0 || output_padding >= stride) {
    throw ShapeError("transposed_conv2d: output_padding must be in [0, stride)");
  }
  const int out_c = w.dim(1);
  const int k = w.dim(2);
  if (b.defined() && b.shape() != Shape{out_c}) throw ShapeError("transposed_conv2d: bias shape");
  const int out_h = (x.dim(2) - 1) * stride - 2 * pad + k + output_padding;
  const int out_w = (x.dim(3) - 1) * stride - 2 * pad + k + output_padding;
  if (out_h < 1 || out_w < 1) throw ShapeError("transposed_conv2d: empty output");
  // The adjoint of a conv from (out_c, out_h, out_w) down to x's shape.
  const auto g =
      kernels::make_conv_geometry(x.dim(0), out_c, out_h, out_w, x.dim(1), k, stride, pad);
  if (g.out_h != x.dim(2) || g.out_w != x.dim(3)) {
    throw ShapeError("transposed_conv2d: inconsistent geometry");
  }
  std::vector<double> y(g.input_size(), 0.0);
  kernels::conv2d_backward_input(g, x.data(), w.data(), y);
  if (b.defined()) {
    const size_t plane = static_cast<size_t>(out_h) * out_w;
    for (int n = 0; n < g.batch; ++n)
      for (int c = 0; c < out_c; ++c)
        for (size_t i = 0; i < plane; ++i) y[(static_cast<size_t>(n) * out_c + c) * plane + i] += b.data()[c];
  }
  return make_op({g.batch, out_c, out_h, out_w}, std::move(y), {x, w, b}, "transposed_conv2d",
                 [g, has_bias = b.defined()](Node& self) {
                   const auto& xp = self.parents[0];
                   const auto& wp = self.parents[1];
                   if (auto gx = grad_of(xp); !gx.empty()) {
                     std::vector<double> tmp(gx.size());
                     kernels::conv2d_forward(g, self.grad, wp->value, {}, tmp);
                     add_into(gx, tmp);
                   }
                   if (auto gw = grad_of(wp); !gw.empty()) {
                     kernels::conv2d_backward_weight(g, self.grad, xp->value, gw, {});
                   }
                   if (has_bias) {
                     if (auto gb = grad_of(self.parents[2]); !gb.empty()) {
                       const size_t plane = static_cast<size_t>(g.in_h) * g.in_w;
                       for (int n = 0; n < g.batch; ++n)
                         for (int c = 0; c < g.in_channels; ++c) {
                           double acc = 0.0;
                           const size_t base = (static_cast<size_t>(n) * g.in_channels + c) * plane;
                           for (size_t i = 0; i < plane; ++i) acc += self.grad[base + i];
                           gb[c] += acc;
                         }
                     }
                   }
                 });
}

Tensor residual_add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "residual_add");
  std::vector<double> y(a.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  return make_op(a.shape(), std::move(y), {a, b}, "residual_add", [](Node& self) {
    for (const auto& p : self.parents) {
      if (auto g = grad_of(p); !g.empty()) add_into(g, self.grad);
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> y(x.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  return make_op(x.shape(), std::move(y), {x}, "relu", [](Node& self) {
    const auto& xp = self.parents[0];
    auto g = grad_of(xp);
    for (size_t i = 0; i < g.size(); ++i) {
      if (xp->value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

namespace {

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  std::vector<double> y(x.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = logistic(x.data()[i]);
  return make_op(x.shape(), std::move(y), {x}, "sigmoid", [](Node& self) {
    auto g = grad_of(self.parents[0]);
    for (size_t i = 0; i < g.size(); ++i) {
      const double s = self.value[i];
      g[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  if (w.dim(1) != x.dim(1)) throw ShapeError("linear: weight in-features != input features");
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (b.defined() && b.shape() != Shape{out}) throw ShapeError("linear: bias shape");
  std::vector<double> y(static_cast<size_t>(n) * out);
  kernels::linear_forward(n, in, out, x.data(), w.data(),
                          b.defined() ? b.data() : std::span<const double>{}, y);
  return make_op({n, out}, std::move(y), {x, w, b}, "linear",
                 [n, in, out, has_bias = b.defined()](Node& self) {
                   const auto& xp = self.parents[0];
                   const auto& wp = self.parents[1];
                   const auto& gy = self.grad;
                   if (auto gx = grad_of(xp); !gx.empty()) {
                     for (int r = 0; r < n; ++r)
                       for (int i = 0; i < in; ++i) {
                         double acc = 0.0;
                         for (int o = 0; o < out; ++o) {
                           acc += gy[static_cast<size_t>(r) * out + o] * wp->value[static_cast<size_t>(o) * in + i];
                         }
                         gx[static_cast<size_t>(r) * in + i] += acc;
                       }
                   }
                   if (auto gw = grad_of(wp); !gw.empty()) {
#pragma omp parallel for schedule(static)
                     for (int o = 0; o < out; ++o)
                       for (int i = 0; i < in; ++i) {
                         double acc = 0.0;
                         for (int r = 0; r < n; ++r) {
                           acc += gy[static_cast<size_t>(r) * out + o] * xp->value[static_cast<size_t>(r) * in + i];
                         }
                         gw[static_cast<size_t>(o) * in + i] += acc;
                       }
                   }
                   if (has_bias) {
                     if (auto gb = grad_of(self.parents[2]); !gb.empty()) {
                       for (int o = 0; o < out; ++o) {
                         double acc = 0.0;
                         for (int r = 0; r < n; ++r) acc += gy[static_cast<size_t>(r) * out + o];
                         gb[o] += acc;
                       }
                     }
                   }
                 });
}

Tensor max_pool(const Tensor& x, int kernel, int stride) {
  require_rank(x, 4, "max_pool");
  if (kernel < 1 || stride < 1) throw ShapeError("max_pool: kernel and stride must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kernel > h || kernel > w) throw ShapeError("max_pool: kernel larger than input");
  const int oh = (h - kernel) / stride + 1, ow = (w - kernel) / stride + 1;
  std::vector<double> y(static_cast<size_t>(n) * c * oh * ow);
  std::vector<size_t> argmax(y.size());
  const auto xv = x.data();
  size_t o = 0;
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const size_t base = (static_cast<size_t>(b) * c + ch) * h * w;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox, ++o) {
          size_t best = base + static_cast<size_t>(oy * stride) * w + ox * stride;
          for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
              const size_t at = base + static_cast<size_t>(oy * stride + ky) * w + ox * stride + kx;
              if (xv[at] > xv[best]) best = at;
            }
          y[o] = xv[best];
          argmax[o] = best;
        }
    }
  return make_op({n, c, oh, ow}, std::move(y), {x}, "max_pool",
                 [argmax = std::move(argmax)](Node& self) {
                   auto g = grad_of(self.parents[0]);
                   for (size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
                 });
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  require_rank(x, 4, "upsample_nearest");
  if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h * factor, ow = w * factor;
  std::vector<double> y(static_cast<size_t>(n) * c * oh * ow);
  const auto src = [=](size_t plane, int oy, int ox) {
    return plane * h * w + static_cast<size_t>(oy / factor) * w + ox / factor;
  };
  for (size_t p = 0; p < static_cast<size_t>(n) * c; ++p)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        y[(p * oh + oy) * ow + ox] = x.data()[src(p, oy, ox)];
      }
  return make_op({n, c, oh, ow}, std::move(y), {x}, "upsample_nearest",
                 [n, c, oh, ow, src](Node& self) {
                   auto g = grad_of(self.parents[0]);
                   for (size_t p = 0; p < static_cast<size_t>(n) * c; ++p)
                     for (int oy = 0; oy < oh; ++oy)
                       for (int ox = 0; ox < ow; ++ox) {
                         g[src(p, oy, ox)] += self.grad[(p * oh + oy) * ow + ox];
                       }
                 });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: batch/spatial mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const size_t plane = static_cast<size_t>(a.dim(2)) * a.dim(3);
  std::vector<double> y(static_cast<size_t>(n) * (ca + cb) * plane);
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.data().begin() + i * ca * plane, ca * plane, y.begin() + i * (ca + cb) * plane);
    std::copy_n(b.data().begin() + i * cb * plane, cb * plane,
                y.begin() + (i * (ca + cb) + ca) * plane);
  }
  return make_op({n, ca + cb, a.dim(2), a.dim(3)}, std::move(y), {a, b}, "concat_channels",
                 [n, ca, cb, plane](Node& self) {
                   auto ga = grad_of(self.parents[0]);
                   auto gb = grad_of(self.parents[1]);
                   for (int i = 0; i < n; ++i) {
                     const size_t row = static_cast<size_t>(i) * (ca + cb) * plane;
                     if (!ga.empty()) {
                       for (size_t k = 0; k < ca * plane; ++k) ga[i * ca * plane + k] += self.grad[row + k];
                     }
                     if (!gb.empty()) {
                       for (size_t k = 0; k < cb * plane; ++k) {
                         gb[i * cb * plane + k] += self.grad[row + ca * plane + k];
                       }
                     }
                   }
                 });
}

Tensor flatten(const Tensor& x) {
  const int n = x.dim(0);
  const int rest = static_cast<int>(x.size() / n);
  return make_op({n, rest}, std::vector<double>(x.data().begin(), x.data().end()), {x}, "flatten",
                 [](Node& self) { add_into(grad_of(self.parents[0]), self.grad); });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> y(x.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = factor * x.data()[i];
  return make_op(x.shape(), std::move(y), {x}, "scale", [factor](Node& self) {
    auto g = grad_of(self.parents[0]);
    for (size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor sigmoid_cross_entropy(const Tensor& logits, const Tensor& targets) {
  require_same(logits, targets, "sigmoid_cross_entropy");
  const auto z = logits.data();
  const auto t = targets.data();
  const double m = static_cast<double>(z.size());
  double total = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    if (!(t[i] >= 0.0 && t[i] <= 1.0)) {
      throw DomainError("sigmoid_cross_entropy: target outside [0, 1] at element " +
                        std::to_string(i));
    }
    total += std::max(z[i], 0.0) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  return make_op({1}, {total / m}, {logits, targets}, "sigmoid_cross_entropy", [m](Node& self) {
    const auto& zp = self.parents[0];
    const auto& tp = self.parents[1];
    const double up = self.grad[0] / m;
    if (auto gz = grad_of(zp); !gz.empty()) {
      for (size_t i = 0; i < gz.size(); ++i) gz[i] += up * (logistic(zp->value[i]) - tp->value[i]);
    }
    if (auto gt = grad_of(tp); !gt.empty()) {
      for (size_t i = 0; i < gt.size(); ++i) gt[i] -= up * zp->value[i];
    }
  });
}

Tensor euclidean_loss(const Tensor& pred, const Tensor& target) {
  require_same(pred, target, "euclidean_loss");
  const double n = pred.dim(0);
  double total = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data()[i] - target.data()[i];
    total += d * d;
  }
  return make_op({1}, {0.5 * total / n}, {pred, target}, "euclidean_loss", [n](Node& self) {
    const auto& pp = self.parents[0];
    const auto& tp = self.parents[1];
    const double up = self.grad[0] / n;
    auto gp = grad_of(pp);
    auto gt = grad_of(tp);
    for (size_t i = 0; i < pp->value.size(); ++i) {
      const double d = up * (pp->value[i] - tp->value[i]);
      if (!gp.empty()) gp[i] += d;
      if (!gt.empty()) gt[i] -= d;
    }
  });
}

// ---- initialisation ----

std::vector<double> glorot_uniform(size_t count, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<double> v(count);
  for (double& x : v) x = dist(rng);
  return v;
}

std::vector<double> bilinear_kernel(int in_channels, int out_channels, int kernel) {
  const int factor = (kernel + 1) / 2;
  const double center = kernel % 2 == 1 ? factor - 1 : factor - 0.5;
  std::vector<double> w(static_cast<size_t>(in_channels) * out_channels * kernel * kernel, 0.0);
  for (int ic = 0; ic < in_channels; ++ic) {
    const int oc = ic % out_channels;
    for (int y = 0; y < kernel; ++y)
      for (int x = 0; x < kernel; ++x) {
        w[((static_cast<size_t>(ic) * out_channels + oc) * kernel + y) * kernel + x] =
            (1.0 - std::abs(y - center) / factor) * (1.0 - std::abs(x - center) / factor);
      }
  }
  return w;
}

// ---- parameters / optimizer ----

Tensor& ParameterSet::add(std::string name, Shape shape, std::vector<double> values) {
  for (const auto& p : params_) {
    if (p.name == name) throw PreconditionError("duplicate parameter name " + name);
  }
  params_.push_back({std::move(name), Tensor::parameter(std::move(shape), std::move(values))});
  return params_.back().tensor;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw PreconditionError("no parameter named " + name);
}

size_t ParameterSet::count() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void sgd_update(SgdState& state, size_t slot, std::span<double> weights,
                std::span<const double> grads) {
  if (!(state.momentum >= 0.0 && state.momentum < 1.0)) throw DomainError("momentum must lie in [0, 1)");
  if (!(state.weight_decay >= 0.0)) throw DomainError("weight_decay must be >= 0");
  if (grads.size() != weights.size()) throw ShapeError("sgd: gradient/weight size mismatch");
  if (state.velocity.size() <= slot) state.velocity.resize(slot + 1);
  auto& v = state.velocity[slot];
  if (v.empty()) v.assign(weights.size(), 0.0);
  if (v.size() != weights.size()) throw ShapeError("sgd: velocity/weight size mismatch");
  for (size_t i = 0; i < weights.size(); ++i) {
    v[i] = state.momentum * v[i] - state.learning_rate * (grads[i] + state.weight_decay * weights[i]);
    weights[i] += v[i];
  }
}

void sgd_step(SgdState& state, ParameterSet& params) {
  auto& entries = params.entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    Tensor& t = entries[i].tensor;
    const auto g = t.grad();
    if (g.empty()) {
      const std::vector<double> zero(t.size(), 0.0);
      sgd_update(state, i, t.mutable_data(), zero);
    } else {
      sgd_update(state, i, t.mutable_data(), g);
    }
  }
}

// ---- checkpoints ----

namespace {

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& manifest_path, const ParameterSet& params,
                     std::uint64_t seed, int iterations, const nlohmann::json& extra) {
  std::string blob;
  auto list = nlohmann::json::array();
  size_t offset = 0;
  for (const auto& p : params.entries()) {
    list.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset},
                    {"count", p.tensor.size()}});
    for (double v : p.tensor.data()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
    }
    offset += p.tensor.size();
  }
  const auto bin = blob_path(manifest_path);
  nlohmann::json manifest = {{"format", "skelpose-checkpoint"},
                             {"version", 1},
                             {"blob", bin.filename().string()},
                             {"seed", seed},
                             {"iterations", iterations},
                             {"params", list},
                             {"meta", extra}};
  atomic_write_file(bin, blob);
  atomic_write_file(manifest_path, manifest.dump(2) + "\n");
}

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "skelpose-checkpoint") {
    throw ParseError(manifest_path.string() + ": not a checkpoint manifest");
  }
  return manifest;
}

CheckpointInfo load_checkpoint(const std::filesystem::path& manifest_path, ParameterSet& params) {
  const auto manifest = read_checkpoint_manifest(manifest_path);
  const std::string blob =
      read_file(manifest_path.parent_path() / manifest.at("blob").get<std::string>());
  const auto& list = manifest.at("params");
  if (list.size() != params.entries().size()) {
    throw ParseError(manifest_path.string() + ": parameter count mismatch");
  }
  for (size_t i = 0; i < list.size(); ++i) {
    auto& p = params.entries()[i];
    if (list[i].at("name").get<std::string>() != p.name ||
        list[i].at("shape").get<Shape>() != p.tensor.shape()) {
      throw ParseError(manifest_path.string() + ": parameter " + p.name + " does not match model");
    }
    const size_t offset = list[i].at("offset").get<size_t>();
    if ((offset + p.tensor.size()) * 8 > blob.size()) {
      throw ParseError(manifest_path.string() + ": blob truncated");
    }
    auto dst = p.tensor.mutable_data();
    for (size_t k = 0; k < dst.size(); ++k) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[(offset + k) * 8 + b])) << (8 * b);
      }
      dst[k] = std::bit_cast<double>(bits);
    }
  }
  return {manifest.at("seed").get<std::uint64_t>(), manifest.at("iterations").get<int>(),
          manifest.value("meta", nlohmann::json{})};
}

}  // namespace skelpose

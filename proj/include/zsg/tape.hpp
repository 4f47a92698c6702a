#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "zsg/errors.hpp"
#include "zsg/tensor.hpp"

namespace zsg {

enum class ActivationKind { identity, tanh, sigmoid, relu, leaky_relu };

struct Activation {
  ActivationKind kind = ActivationKind::identity;
  double alpha = 0.01;  // leaky_relu negative slope

  static Activation identity() { return {}; }
  static Activation tanh() { return {ActivationKind::tanh}; }
  static Activation sigmoid() { return {ActivationKind::sigmoid}; }
  static Activation relu() { return {ActivationKind::relu}; }
  static Activation leaky_relu(double alpha) {
    if (!(alpha > 0.0)) throw ConfigError("leaky_relu slope must be > 0");
    return {ActivationKind::leaky_relu, alpha};
  }

  bool operator==(const Activation&) const = default;

  double apply(double x) const {
    switch (kind) {
      case ActivationKind::identity: return x;
      case ActivationKind::tanh: return std::tanh(x);
      case ActivationKind::sigmoid: return 1.0 / (1.0 + std::exp(-x));
      case ActivationKind::relu: return x > 0.0 ? x : 0.0;
      case ActivationKind::leaky_relu: return x > 0.0 ? x : alpha * x;
    }
    return x;
  }

  // Derivative expressed through input x and output y.
  double derivative(double x, double y) const {
    switch (kind) {
      case ActivationKind::identity: return 1.0;
      case ActivationKind::tanh: return 1.0 - y * y;
      case ActivationKind::sigmoid: return y * (1.0 - y);
      case ActivationKind::relu: return x > 0.0 ? 1.0 : 0.0;
      case ActivationKind::leaky_relu: return x > 0.0 ? 1.0 : alpha;
    }
    return 1.0;
  }
};

inline std::string to_string(const Activation& a) {
  switch (a.kind) {
    case ActivationKind::identity: return "identity";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::relu: return "relu";
    case ActivationKind::leaky_relu: return "leaky_relu";
  }
  return "identity";
}

inline Activation parse_activation(std::string_view name, double alpha = 0.01) {
  if (name == "identity" || name == "linear") return Activation::identity();
  if (name == "tanh") return Activation::tanh();
  if (name == "sigmoid") return Activation::sigmoid();
  if (name == "relu") return Activation::relu();
  if (name == "leaky_relu" || name == "lrelu") return Activation::leaky_relu(alpha);
  throw ConfigError("unknown activation kind '" + std::string(name) + "'");
}

enum class ReduceKind { sum, mean };

struct TapeOptions {
  // Fault injection for the gradient checker: scales the adjoint flowing
  // into the right operand of every matmul by 1.5.
  bool corrupt_matmul_adjoint = false;
};

// Records executed ops in order; backward() replays their adjoints in exact
// reverse order. A tape supports a single backward pass.
class Tape {
 public:
  static constexpr std::size_t zero_row = std::numeric_limits<std::size_t>::max();

  Tape() = default;
  explicit Tape(TapeOptions options) : options_(options) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const noexcept { return entries_.size(); }

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
      throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                           shape_str(b.shape()));
    }
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<double> c(m * n, 0.0);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = &c[i * n];
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ad[i * k + p];
        const double* brow = &bd[p * n];
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    const double corrupt = options_.corrupt_matmul_adjoint ? 1.5 : 1.0;
    return emit("matmul", {m, n}, std::move(c), {a, b}, [a, b, m, k, n, corrupt](const Node& out) {
      const auto& dc = out.grad;
      if (a.requires_grad()) {
        auto& da = grad_of(a);
        const auto bd = b.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += dc[i * n + j] * bd[p * n + j];
            da[i * k + p] += s;
          }
        }
      }
      if (b.requires_grad()) {
        auto& db = grad_of(b);
        const auto ad = a.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p] * corrupt;
            for (std::size_t j = 0; j < n; ++j) db[p * n + j] += av * dc[i * n + j];
          }
        }
      }
    });
  }

  Tensor add(const Tensor& a, const Tensor& b) { return linear_combination(a, b, 1.0, 1.0, "add"); }
  Tensor sub(const Tensor& a, const Tensor& b) { return linear_combination(a, b, 1.0, -1.0, "sub"); }

  // Elementwise product.
  Tensor mul(const Tensor& a, const Tensor& b) {
    same_shape(a, b, "mul");
    std::vector<double> y(a.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
    return emit("mul", a.shape(), std::move(y), {a, b}, [a, b](const Node& out) {
      if (a.requires_grad()) {
        auto& g = grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * b[i];
      }
      if (b.requires_grad()) {
        auto& g = grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * a[i];
      }
    });
  }

  // scale * x + shift, elementwise.
  Tensor affine(const Tensor& x, double scale, double shift = 0.0) {
    std::vector<double> y(x.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = scale * x[i] + shift;
    return emit("affine", x.shape(), std::move(y), {x}, [x, scale](const Node& out) {
      auto& g = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * out.grad[i];
    });
  }

  // Adds a bias vector of length n to every row of an m x n matrix. This is
  // the only broadcasting the tape supports.
  Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || bias.numel() != x.shape()[1]) {
      throw DimensionError("add_bias shape mismatch: " + shape_str(x.shape()) + " + " +
                           shape_str(bias.shape()));
    }
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> y(x.data().begin(), x.data().end());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] += bias[j];
    return emit("add_bias", x.shape(), std::move(y), {x, bias}, [x, bias, m, n](const Node& out) {
      if (x.requires_grad()) {
        auto& g = grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
      }
      if (bias.requires_grad()) {
        auto& g = grad_of(bias);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) g[j] += out.grad[i * n + j];
      }
    });
  }

  Tensor activation(const Tensor& x, const Activation& act) {
    if (act.kind == ActivationKind::identity) return x;
    if (act.kind == ActivationKind::leaky_relu && !(act.alpha > 0.0)) {
      throw ConfigError("leaky_relu slope must be > 0");
    }
    std::vector<double> y(x.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = act.apply(x[i]);
    return emit(to_string(act).c_str(), x.shape(), std::move(y), {x}, [x, act](const Node& out) {
      auto& g = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += out.grad[i] * act.derivative(x[i], out.data[i]);
      }
    });
  }

  Tensor tanh(const Tensor& x) { return activation(x, Activation::tanh()); }
  Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid()); }

  Tensor transpose(const Tensor& x) {
    require_rank2(x, "transpose");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> y(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
    return emit("transpose", {n, m}, std::move(y), {x}, [x, m, n](const Node& out) {
      auto& g = grad_of(x);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += out.grad[j * m + i];
    });
  }

  Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
      throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    std::vector<double> y(x.data().begin(), x.data().end());
    return emit("reshape", std::move(shape), std::move(y), {x}, [x](const Node& out) {
      auto& g = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
    });
  }

  // Reduction along one axis: matrix -> vector, vector -> scalar.
  Tensor reduce(const Tensor& x, ReduceKind kind, std::size_t axis) {
    if (axis >= x.rank()) {
      throw DimensionError("reduce axis " + std::to_string(axis) + " out of range for " +
                           shape_str(x.shape()));
    }
    const Layout lay = layout(x, axis);
    const double w = kind == ReduceKind::mean ? 1.0 / static_cast<double>(lay.len) : 1.0;
    std::vector<double> y(lay.groups, 0.0);
    for (std::size_t g = 0; g < lay.groups; ++g) {
      double s = 0.0;
      for (std::size_t i = 0; i < lay.len; ++i) s += x[lay.index(g, i)];
      y[g] = s * w;
    }
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    return emit("reduce", std::move(out_shape), std::move(y), {x}, [x, lay, w](const Node& out) {
      auto& gx = grad_of(x);
      for (std::size_t g = 0; g < lay.groups; ++g)
        for (std::size_t i = 0; i < lay.len; ++i) gx[lay.index(g, i)] += out.grad[g] * w;
    });
  }

  Tensor reduce_all(const Tensor& x, ReduceKind kind) {
    const double w = kind == ReduceKind::mean ? 1.0 / static_cast<double>(x.numel()) : 1.0;
    double s = 0.0;
    for (double v : x.data()) s += v;
    return emit("reduce_all", {}, {s * w}, {x}, [x, w](const Node& out) {
      auto& g = grad_of(x);
      for (double& gi : g) gi += out.grad[0] * w;
    });
  }

  Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) throw DimensionError("softmax axis out of range for " + shape_str(x.shape()));
    const Layout lay = layout(x, axis);
    std::vector<double> y(x.numel());
    for (std::size_t g = 0; g < lay.groups; ++g) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < lay.len; ++i) mx = std::max(mx, x[lay.index(g, i)]);
      double z = 0.0;
      for (std::size_t i = 0; i < lay.len; ++i) {
        const std::size_t k = lay.index(g, i);
        y[k] = std::exp(x[k] - mx);
        z += y[k];
      }
      for (std::size_t i = 0; i < lay.len; ++i) y[lay.index(g, i)] /= z;
    }
    return emit("softmax", x.shape(), std::move(y), {x}, [x, lay](const Node& out) {
      auto& gx = grad_of(x);
      for (std::size_t g = 0; g < lay.groups; ++g) {
        double dot = 0.0;
        for (std::size_t i = 0; i < lay.len; ++i) {
          const std::size_t k = lay.index(g, i);
          dot += out.grad[k] * out.data[k];
        }
        for (std::size_t i = 0; i < lay.len; ++i) {
          const std::size_t k = lay.index(g, i);
          gx[k] += out.data[k] * (out.grad[k] - dot);
        }
      }
    });
  }

  // Row-wise normalization to zero mean / unit variance followed by a
  // per-column gain and bias.
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-12) {
    require_rank2(x, "layer_norm");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (gain.numel() != n || bias.numel() != n || gain.rank() != 1 || bias.rank() != 1) {
      throw DimensionError("layer_norm gain/bias must be length " + std::to_string(n));
    }
    std::vector<double> xhat(m * n), inv_std(m), y(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      double mu = 0.0;
      for (std::size_t j = 0; j < n; ++j) mu += x[i * n + j];
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = x[i * n + j] - mu;
        var += d * d;
      }
      var /= static_cast<double>(n);
      inv_std[i] = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < n; ++j) {
        xhat[i * n + j] = (x[i * n + j] - mu) * inv_std[i];
        y[i * n + j] = gain[j] * xhat[i * n + j] + bias[j];
      }
    }
    return emit("layer_norm", x.shape(), std::move(y), {x, gain, bias},
                [x, gain, bias, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Node& out) {
                  const auto& dy = out.grad;
                  if (gain.requires_grad()) {
                    auto& g = grad_of(gain);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) g[j] += dy[i * n + j] * xhat[i * n + j];
                  }
                  if (bias.requires_grad()) {
                    auto& g = grad_of(bias);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) g[j] += dy[i * n + j];
                  }
                  if (x.requires_grad()) {
                    auto& g = grad_of(x);
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t i = 0; i < m; ++i) {
                      double mean_d = 0.0, mean_dx = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double d = dy[i * n + j] * gain[j];
                        mean_d += d;
                        mean_dx += d * xhat[i * n + j];
                      }
                      mean_d *= inv_n;
                      mean_dx *= inv_n;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double d = dy[i * n + j] * gain[j];
                        g[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
                      }
                    }
                  }
                });
  }

  // Mean over every element of (pred - target)^2.
  Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    same_shape(pred, target, "mse_loss");
    if (target.requires_grad()) throw TapeError("mse_loss target must not require grad");
    const std::size_t n = pred.numel();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = pred[i] - target[i];
      s += d * d;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    return emit("mse_loss", {}, {s * inv_n}, {pred}, [pred, target, inv_n](const Node& out) {
      auto& g = grad_of(pred);
      const double scale = 2.0 * inv_n * out.grad[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * (pred[i] - target[i]);
    });
  }

  Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
    require_rank2(x, "slice_cols");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (len == 0 || start + len > n) {
      throw DimensionError("slice_cols [" + std::to_string(start) + ", " + std::to_string(start + len) +
                           ") out of range for " + shape_str(x.shape()));
    }
    std::vector<double> y(m * len);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < len; ++j) y[i * len + j] = x[i * n + start + j];
    return emit("slice_cols", {m, len}, std::move(y), {x}, [x, m, n, start, len](const Node& out) {
      auto& g = grad_of(x);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < len; ++j) g[i * n + start + j] += out.grad[i * len + j];
    });
  }

  Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols of nothing");
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    for (const auto& p : parts) {
      require_rank2(p, "concat_cols");
      if (p.shape()[0] != m) throw DimensionError("concat_cols row mismatch");
      n += p.shape()[1];
    }
    std::vector<double> y(m * n);
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.shape()[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) y[i * n + off + j] = p[i * w + j];
      off += w;
    }
    return emit("concat_cols", {m, n}, std::move(y), parts, [parts, m, n](const Node& out) {
      std::size_t off = 0;
      for (const auto& p : parts) {
        const std::size_t w = p.shape()[1];
        if (p.requires_grad()) {
          auto& g = grad_of(p);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * w + j] += out.grad[i * n + off + j];
        }
        off += w;
      }
    });
  }

  Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows of nothing");
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    for (const auto& p : parts) {
      require_rank2(p, "concat_rows");
      if (p.shape()[1] != n) throw DimensionError("concat_rows column mismatch");
      m += p.shape()[0];
    }
    std::vector<double> y;
    y.reserve(m * n);
    for (const auto& p : parts) y.insert(y.end(), p.data().begin(), p.data().end());
    return emit("concat_rows", {m, n}, std::move(y), parts, [parts](const Node& out) {
      std::size_t off = 0;
      for (const auto& p : parts) {
        if (p.requires_grad()) {
          auto& g = grad_of(p);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[off + i];
        }
        off += p.numel();
      }
    });
  }

  // Output row r is x's row indices[r], or a zero row when indices[r] is
  // Tape::zero_row (padding).
  Tensor gather_rows(const Tensor& x, std::vector<std::size_t> indices) {
    require_rank2(x, "gather_rows");
    if (indices.empty()) throw DimensionError("gather_rows with no indices");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<double> y(indices.size() * n, 0.0);
    for (std::size_t r = 0; r < indices.size(); ++r) {
      if (indices[r] == zero_row) continue;
      if (indices[r] >= m) throw DimensionError("gather_rows index out of range");
      std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(indices[r] * n), n, y.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    const std::size_t out_rows = indices.size();
    return emit("gather_rows", {out_rows, n}, std::move(y), {x},
                [x, n, indices = std::move(indices)](const Node& out) {
                  auto& g = grad_of(x);
                  for (std::size_t r = 0; r < indices.size(); ++r) {
                    if (indices[r] == zero_row) continue;
                    for (std::size_t j = 0; j < n; ++j) g[indices[r] * n + j] += out.grad[r * n + j];
                  }
                });
  }

  // x stacks variable-length segments row-wise; returns one mean row per
  // segment.
  Tensor segment_mean(const Tensor& x, std::span<const std::size_t> lengths) {
    require_rank2(x, "segment_mean");
    const std::size_t n = x.shape()[1];
    std::size_t total = 0;
    for (std::size_t len : lengths) {
      if (len == 0) throw DimensionError("segment_mean with an empty segment");
      total += len;
    }
    if (lengths.empty() || total != x.shape()[0]) {
      throw DimensionError("segment lengths do not cover " + shape_str(x.shape()));
    }
    std::vector<std::size_t> lens(lengths.begin(), lengths.end());
    std::vector<double> y(lens.size() * n, 0.0);
    std::size_t row = 0;
    for (std::size_t s = 0; s < lens.size(); ++s) {
      for (std::size_t r = 0; r < lens[s]; ++r, ++row)
        for (std::size_t j = 0; j < n; ++j) y[s * n + j] += x[row * n + j];
      for (std::size_t j = 0; j < n; ++j) y[s * n + j] /= static_cast<double>(lens[s]);
    }
    const std::size_t segs = lens.size();
    return emit("segment_mean", {segs, n}, std::move(y), {x}, [x, n, lens = std::move(lens)](const Node& out) {
      auto& g = grad_of(x);
      std::size_t row = 0;
      for (std::size_t s = 0; s < lens.size(); ++s) {
        const double w = 1.0 / static_cast<double>(lens[s]);
        for (std::size_t r = 0; r < lens[s]; ++r, ++row)
          for (std::size_t j = 0; j < n; ++j) g[row * n + j] += out.grad[s * n + j] * w;
      }
    });
  }

  // steps[t] is the B x h state after step t. Row b of the result is row b
  // of steps[lengths[b] - 1].
  Tensor pick_last(const std::vector<Tensor>& steps, std::span<const std::size_t> lengths) {
    if (steps.empty()) throw DimensionError("pick_last with no steps");
    const std::size_t batch = steps.front().rows(), h = steps.front().cols();
    if (lengths.size() != batch) throw DimensionError("pick_last: one length per row required");
    std::vector<std::size_t> lens(lengths.begin(), lengths.end());
    std::vector<double> y(batch * h);
    for (std::size_t b = 0; b < batch; ++b) {
      if (lens[b] == 0 || lens[b] > steps.size()) throw DimensionError("pick_last length out of range");
      const Tensor& s = steps[lens[b] - 1];
      for (std::size_t j = 0; j < h; ++j) y[b * h + j] = s[b * h + j];
    }
    return emit("pick_last", {batch, h}, std::move(y), steps, [steps, h, lens = std::move(lens)](const Node& out) {
      for (std::size_t b = 0; b < lens.size(); ++b) {
        const Tensor& s = steps[lens[b] - 1];
        if (!s.requires_grad()) continue;
        auto& g = grad_of(s);
        for (std::size_t j = 0; j < h; ++j) g[b * h + j] += out.grad[b * h + j];
      }
    });
  }

  // Populates the grad of every requires_grad tensor reachable from loss.
  // Leaf grads accumulate into whatever the buffers already hold.
  void backward(const Tensor& loss) {
    if (backward_done_) throw TapeError("backward already ran on this tape");
    if (loss.rank() != 0 && loss.numel() != 1) {
      throw TapeError("backward needs a scalar loss, got " + shape_str(loss.shape()));
    }
    const Node& ln = *loss.node_;
    if (!ln.requires_grad || ln.producer != this) {
      throw TapeError("loss is not connected to this tape");
    }
    backward_done_ = true;
    loss.node_->grad[0] += 1.0;
    for (std::size_t i = ln.producer_index + 1; i-- > 0;) {
      Entry& e = entries_[i];
      e.backward(*e.output);
    }
  }

 private:
  using Node = Tensor::Node;

  struct Entry {
    std::shared_ptr<Node> output;
    std::function<void(const Node&)> backward;
  };

  struct Layout {
    std::size_t groups, len, group_stride, elem_stride;
    std::size_t index(std::size_t g, std::size_t i) const { return g * group_stride + i * elem_stride; }
  };

  static Layout layout(const Tensor& x, std::size_t axis) {
    if (x.rank() == 1) return {1, x.numel(), 0, 1};
    if (x.rank() != 2) throw DimensionError("op supports rank 1 or 2, got " + shape_str(x.shape()));
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    return axis == 1 ? Layout{m, n, n, 1} : Layout{n, m, 1, n};
  }

  static std::vector<double>& grad_of(const Tensor& t) { return t.node_->grad; }

  static void require_rank2(const Tensor& x, const char* op) {
    if (x.rank() != 2) throw DimensionError(std::string(op) + " needs a matrix, got " + shape_str(x.shape()));
  }

  static void same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
      throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
    }
  }

  Tensor linear_combination(const Tensor& a, const Tensor& b, double wa, double wb, const char* op) {
    same_shape(a, b, op);
    std::vector<double> y(a.numel());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = wa * a[i] + wb * b[i];
    return emit(op, a.shape(), std::move(y), {a, b}, [a, b, wa, wb](const Node& out) {
      if (a.requires_grad()) {
        auto& g = grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += wa * out.grad[i];
      }
      if (b.requires_grad()) {
        auto& g = grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += wb * out.grad[i];
      }
    });
  }

  template <typename Backward>
  Tensor emit(const char* op, Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
              Backward&& backward) {
    require_finite(values, op);
    bool needs_grad = false;
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
    Tensor out = Tensor::from(std::move(shape), std::move(values), needs_grad);
    if (needs_grad) {
      out.node_->producer = this;
      out.node_->producer_index = entries_.size();
      entries_.push_back({out.node_, std::forward<Backward>(backward)});
    }
    return out;
  }

  TapeOptions options_;
  std::vector<Entry> entries_;
  bool backward_done_ = false;
};

}  // namespace zsg

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "zsg/errors.hpp"

namespace zsg {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

// Throws NumericError naming `where` if any value is NaN or infinite.
inline void require_finite(std::span<const double> values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + where);
  }
}

class Tape;

// Dense float64 row-major tensor handle. Copies share storage; use clone()
// for a deep copy. Rank 0 is a scalar, rank 1 a vector, rank 2 a matrix.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    for (std::size_t e : shape) {
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor of shape " + shape_str(shape) + " needs " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(data.size()));
    }
    require_finite(data, "tensor construction");
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    if (requires_grad) t.node_->grad.assign(t.node_->data.size(), 0.0);
    return t;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return from({n}, std::move(v), requires_grad);
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false) {
    std::vector<double> data;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), r.begin(), r.end());
    }
    return from({rows.size(), cols}, std::move(data), requires_grad);
  }

  static Tensor identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.node_->data[i * n + i] = 1.0;
    return t;
  }

  explicit operator bool() const noexcept { return static_cast<bool>(node_); }

  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t numel() const { return node().data.size(); }
  std::size_t rows() const { return rank() == 2 ? shape()[0] : 1; }
  std::size_t cols() const { return rank() == 0 ? 1 : shape().back(); }

  std::span<const double> data() const { return node().data; }
  // Direct write access for optimizers and initializers. Values written
  // here bypass the tape.
  std::span<double> mutable_data() { return node().data; }

  double item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node().data[0];
  }
  double operator[](std::size_t i) const { return node().data[i]; }
  double at(std::size_t r, std::size_t c) const { return node().data[r * cols() + c]; }

  bool requires_grad() const { return node().requires_grad; }
  bool has_grad() const { return node().requires_grad; }
  std::span<const double> grad() const {
    if (!has_grad()) throw TapeError("tensor does not require grad");
    return node().grad;
  }
  std::span<double> mutable_grad() {
    if (!has_grad()) throw TapeError("tensor does not require grad");
    return node().grad;
  }
  void zero_grad() {
    if (has_grad()) std::fill(node().grad.begin(), node().grad.end(), 0.0);
  }

  Tensor clone(bool requires_grad) const { return from(shape(), node().data, requires_grad); }
  Tensor clone() const { return clone(requires_grad()); }

  bool same(const Tensor& other) const noexcept { return node_ == other.node_; }

 private:
  friend class Tape;

  struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    const Tape* producer = nullptr;
    std::size_t producer_index = 0;
  };

  Node& node() const {
    if (!node_) throw TapeError("use of an empty tensor handle");
    return *node_;
  }

  std::shared_ptr<Node> node_;
};

}  // namespace zsg

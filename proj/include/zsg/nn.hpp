#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "zsg/gradcheck.hpp"
#include "zsg/rng.hpp"
#include "zsg/tape.hpp"
#include "zsg/tensor.hpp"

namespace zsg::nn {

// Uniform Glorot initialisation, limit sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (double& v : w) v = rng.uniform(-limit, limit);
  return Tensor::from({fan_in, fan_out}, std::move(w), true);
}

inline Tensor zeros_param(std::size_t n) { return Tensor::zeros({n}, true); }

inline Tensor filled_param(std::size_t n, double value) {
  return Tensor::from({n}, std::vector<double>(n, value), true);
}

// x . W + b
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng) : weight(glorot(in, out, rng)), bias(zeros_param(out)) {}

  std::size_t in_dim() const { return weight.shape()[0]; }
  std::size_t out_dim() const { return weight.shape()[1]; }

  Tensor forward(Tape& tape, const Tensor& x) const { return tape.add_bias(tape.matmul(x, weight), bias); }

  void collect(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

}  // namespace zsg::nn

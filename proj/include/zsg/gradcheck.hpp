#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "zsg/rng.hpp"
#include "zsg/tape.hpp"
#include "zsg/tensor.hpp"

namespace zsg {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using LossClosure = std::function<Tensor(Tape&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Relative error uses max(|analytic|, |numeric|, floor) as denominator so
  // that coordinates with (near) zero gradient are judged absolutely.
  double floor = 1e-6;
  // 0 checks every coordinate; otherwise a seeded sample per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  TapeOptions tape;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Compares tape gradients against central finite differences. The closure
// must be deterministic and read parameter values through the given tensors.
inline GradCheckResult grad_check(const LossClosure& loss_fn, std::vector<NamedParam> params,
                                  const GradCheckOptions& opts = {}) {
  for (auto& p : params) p.tensor.zero_grad();
  {
    Tape tape(opts.tape);
    Tensor loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto probe = [&] {
    Tape tape(opts.tape);
    const double v = loss_fn(tape).item();
    if (!std::isfinite(v)) throw NumericError("non-finite loss while probing gradients");
    return v;
  };

  GradCheckResult result;
  Rng rng(opts.seed);
  for (auto& p : params) {
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    std::vector<std::size_t> coords(p.tensor.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opts.max_coords_per_param && coords.size() > opts.max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(opts.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    auto values = p.tensor.mutable_data();
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + opts.eps;
      const double up = probe();
      values[i] = saved - opts.eps;
      const double down = probe();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double err = relative_error(analytic[i], numeric, opts.floor);
      ++result.coords_checked;
      if (result.worst_param.empty() || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = p.name;
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace zsg

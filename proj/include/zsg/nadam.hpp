#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "zsg/errors.hpp"
#include "zsg/gradcheck.hpp"

namespace zsg {

struct NadamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers for one parameter tensor.
struct NadamSlot {
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected NAdam update at step t (t >= 1):
//   m = b1 m + (1-b1) g          v = b2 v + (1-b2) g^2
//   m_hat = m / (1-b1^t)         v_hat = v / (1-b2^t)
//   p -= lr (b1 m_hat + (1-b1) g / (1-b1^t)) / (sqrt(v_hat) + eps)
inline void nadam_step(std::span<double> param, std::span<const double> grad, NadamSlot& slot, std::size_t t,
                       double lr, const NadamHyper& hp = {}) {
  if (param.size() != grad.size()) throw DimensionError("nadam_step: parameter/gradient size mismatch");
  if (t == 0) throw ConfigError("nadam_step: step counter starts at 1");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("nadam_step: non-finite gradient at coordinate " + std::to_string(i));
    }
  }
  if (slot.m.empty()) {
    slot.m.assign(param.size(), 0.0);
    slot.v.assign(param.size(), 0.0);
  }
  const double td = static_cast<double>(t);
  const double bc1 = 1.0 - std::pow(hp.beta1, td);
  const double bc2 = 1.0 - std::pow(hp.beta2, td);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    slot.m[i] = hp.beta1 * slot.m[i] + (1.0 - hp.beta1) * g;
    slot.v[i] = hp.beta2 * slot.v[i] + (1.0 - hp.beta2) * g * g;
    const double m_hat = slot.m[i] / bc1;
    const double v_hat = slot.v[i] / bc2;
    param[i] -= lr * (hp.beta1 * m_hat + (1.0 - hp.beta1) * g / bc1) / (std::sqrt(v_hat) + hp.eps);
  }
}

// NAdam over a fixed parameter list, consuming the tensors' grad buffers.
class Nadam {
 public:
  Nadam(std::vector<NamedParam> params, double lr, NadamHyper hp = {})
      : params_(std::move(params)), slots_(params_.size()), lr_(lr), hp_(hp) {}

  std::size_t steps() const noexcept { return t_; }
  double lr() const noexcept { return lr_; }
  const std::vector<NadamSlot>& slots() const noexcept { return slots_; }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  // Grads are validated for every parameter before any value changes.
  void step() {
    for (const auto& p : params_) {
      const auto g = p.tensor.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i])) {
          throw NumericError("nadam: non-finite gradient in " + p.name + " at coordinate " + std::to_string(i));
        }
      }
    }
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      nadam_step(params_[i].tensor.mutable_data(), params_[i].tensor.grad(), slots_[i], t_, lr_, hp_);
    }
  }

 private:
  std::vector<NamedParam> params_;
  std::vector<NadamSlot> slots_;
  std::size_t t_ = 0;
  double lr_;
  NadamHyper hp_;
};

}  // namespace zsg

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "zsg/gradcheck.hpp"
#include "zsg/model.hpp"
#include "zsg/rng.hpp"
#include "zsg/tape.hpp"

namespace zsg {

struct ToyDims {
  std::size_t text_dim = 5;
  std::size_t grounded_dim = 4;
  std::size_t hidden = 6;
  std::size_t image_dim = 3;
  std::size_t heads = 2;
};

// Model config for a gradient check at toy size. WL predicts in the
// grounded space, so its image dim is forced to c.
inline ModelConfig toy_model_config(const EncoderConfig& encoder, const AlignmentConfig& alignment,
                                    std::uint64_t seed, const ToyDims& dims = {}) {
  ModelConfig mc;
  mc.text_dim = dims.text_dim;
  mc.grounded_dim = dims.grounded_dim;
  mc.image_dim = encoder.kind == EncoderKind::wl ? dims.grounded_dim : dims.image_dim;
  mc.alignment = alignment;
  mc.encoder = encoder;
  mc.encoder.hidden = dims.hidden;
  mc.encoder.heads = dims.heads;
  mc.seed = seed;
  return mc;
}

// Finite-difference check of every model parameter on a random batch of
// short captions (lengths 4 and 2; all 1 for WL).
inline GradCheckResult check_model_gradients(const ModelConfig& mc, std::uint64_t seed, bool corrupt_adjoint = false) {
  GroundingModel model(mc);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  const std::vector<std::size_t> lengths =
      mc.encoder.kind == EncoderKind::wl ? std::vector<std::size_t>{1, 1, 1} : std::vector<std::size_t>{4, 2};
  std::size_t total = 0;
  for (std::size_t l : lengths) total += l;
  std::vector<double> tok(total * mc.text_dim), tgt(lengths.size() * mc.image_dim);
  for (auto& v : tok) v = rng.normal();
  for (auto& v : tgt) v = rng.normal();
  const Tensor tokens = Tensor::from({total, mc.text_dim}, tok);
  const Tensor targets = Tensor::from({lengths.size(), mc.image_dim}, tgt);
  GradCheckOptions opts;
  opts.seed = seed;
  opts.tape.corrupt_matmul_adjoint = corrupt_adjoint;
  return grad_check([&](Tape& tape) { return tape.mse_loss(model.forward(tape, tokens, lengths), targets); },
                    model.parameters(), opts);
}

}  // namespace zsg

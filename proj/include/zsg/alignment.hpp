#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zsg/embedding.hpp"
#include "zsg/errors.hpp"
#include "zsg/gradcheck.hpp"
#include "zsg/nn.hpp"
#include "zsg/rng.hpp"
#include "zsg/tape.hpp"
#include "zsg/textio.hpp"

namespace zsg {

// Shape of the text -> grounded mapping M. The canonical names are
// linear:1, relu:1, lrelu:1 and lrelu:2; any "<act>:<layers>" with act in
// {linear, relu, lrelu, tanh} is accepted.
struct AlignmentConfig {
  Activation activation = Activation::identity();
  std::size_t layers = 1;

  // Linear maps are a pure matrix product; nonlinear layers carry a bias.
  bool has_bias() const { return activation.kind != ActivationKind::identity; }

  std::string name() const {
    std::string act;
    switch (activation.kind) {
      case ActivationKind::identity: act = "linear"; break;
      case ActivationKind::relu: act = "relu"; break;
      case ActivationKind::leaky_relu: act = "lrelu"; break;
      case ActivationKind::tanh: act = "tanh"; break;
      case ActivationKind::sigmoid: act = "sigmoid"; break;
    }
    return act + ":" + std::to_string(layers);
  }

  bool operator==(const AlignmentConfig&) const = default;
};

inline AlignmentConfig parse_alignment(std::string_view spec, double leaky_alpha = 0.01) {
  const auto colon = spec.find(':');
  const std::string_view act = spec.substr(0, colon);
  std::size_t layers = 1;
  if (colon != std::string_view::npos) {
    if (!text::try_parse_size(spec.substr(colon + 1), layers) || layers == 0) {
      throw ConfigError("bad alignment layer count in '" + std::string(spec) + "'");
    }
  }
  AlignmentConfig cfg;
  cfg.layers = layers;
  if (act == "linear") {
    cfg.activation = Activation::identity();
  } else if (act == "relu") {
    cfg.activation = Activation::relu();
  } else if (act == "lrelu" || act == "leaky_relu") {
    cfg.activation = Activation::leaky_relu(leaky_alpha);
  } else if (act == "tanh") {
    cfg.activation = Activation::tanh();
  } else {
    throw ConfigError("unknown alignment '" + std::string(spec) + "' (expected linear:1, relu:1, lrelu:1, lrelu:2)");
  }
  return cfg;
}

// The alignment M: text vectors (d) -> grounded vectors (c). Every layer
// maps into c; the activation follows every layer.
class AlignmentMap {
 public:
  struct Layer {
    Tensor weight;  // in x out
    Tensor bias;    // empty for the bias-free linear map
  };

  AlignmentMap() = default;

  AlignmentMap(const AlignmentConfig& config, std::size_t in_dim, std::size_t out_dim, Rng& rng)
      : config_(config), in_dim_(in_dim), out_dim_(out_dim) {
    if (in_dim == 0 || out_dim == 0) throw ConfigError("alignment dims must be positive");
    std::size_t fan_in = in_dim;
    for (std::size_t l = 0; l < config.layers; ++l) {
      Layer layer{nn::glorot(fan_in, out_dim, rng), {}};
      if (config.has_bias()) layer.bias = nn::zeros_param(out_dim);
      layers_.push_back(std::move(layer));
      fan_in = out_dim;
    }
  }

  // Wraps an explicit weight matrix as a single bias-free linear layer.
  static AlignmentMap linear(Tensor weight) {
    if (weight.rank() != 2) throw DimensionError("alignment weight must be a matrix");
    AlignmentMap m;
    m.in_dim_ = weight.shape()[0];
    m.out_dim_ = weight.shape()[1];
    m.layers_.push_back({weight.clone(true), {}});
    return m;
  }

  const AlignmentConfig& config() const noexcept { return config_; }
  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t out_dim() const noexcept { return out_dim_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  // x: n x d -> n x c
  Tensor forward(Tape& tape, const Tensor& x) const {
    if (x.rank() != 2 || x.shape()[1] != in_dim_) {
      throw DimensionError("alignment expects n x " + std::to_string(in_dim_) + " input, got " +
                           shape_str(x.shape()));
    }
    Tensor h = x;
    for (const auto& layer : layers_) {
      h = tape.matmul(h, layer.weight);
      if (layer.bias) h = tape.add_bias(h, layer.bias);
      h = tape.activation(h, config_.activation);
    }
    return h;
  }

  // Single-vector inference. Accumulation order matches Tape::matmul.
  std::vector<double> map_word(std::span<const double> t) const {
    if (t.size() != in_dim_) {
      throw DimensionError("map_word: vector dim " + std::to_string(t.size()) + ", alignment expects " +
                           std::to_string(in_dim_));
    }
    std::vector<double> cur(t.begin(), t.end());
    for (const auto& layer : layers_) {
      const std::size_t in = layer.weight.shape()[0], out = layer.weight.shape()[1];
      std::vector<double> next(out, 0.0);
      const auto w = layer.weight.data();
      for (std::size_t p = 0; p < in; ++p) {
        const double v = cur[p];
        for (std::size_t j = 0; j < out; ++j) next[j] += v * w[p * out + j];
      }
      if (layer.bias)
        for (std::size_t j = 0; j < out; ++j) next[j] += layer.bias[j];
      for (double& v : next) v = config_.activation.apply(v);
      cur = std::move(next);
    }
    return cur;
  }

  std::vector<NamedParam> parameters() const {
    std::vector<NamedParam> out;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const std::string prefix = "align." + std::to_string(l);
      out.push_back({prefix + ".weight", layers_[l].weight});
      if (layers_[l].bias) out.push_back({prefix + ".bias", layers_[l].bias});
    }
    return out;
  }

 private:
  AlignmentConfig config_;
  std::size_t in_dim_ = 0;
  std::size_t out_dim_ = 0;
  std::vector<Layer> layers_;
};

// Grounded table plus where it came from.
struct GroundedSpace {
  EmbeddingTable table;
  std::string source_name;
  std::string checkpoint_id;
  std::string config_hash;
};

// Maps every row of source through M. Rows are computed independently, so
// grounding a sub-vocabulary reproduces the matching rows bit for bit.
inline GroundedSpace ground_vocabulary(const AlignmentMap& map, const EmbeddingTable& source,
                                       std::string checkpoint_id = {}, std::string config_hash = {}) {
  if (source.dim() != map.in_dim()) {
    throw DimensionError("ground_vocabulary: source dim " + std::to_string(source.dim()) +
                         " but alignment expects " + std::to_string(map.in_dim()));
  }
  std::vector<double> out;
  out.reserve(source.size() * map.out_dim());
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto g = map.map_word(source.row(i));
    out.insert(out.end(), g.begin(), g.end());
  }
  return {EmbeddingTable(source.name() + "-grounded", source.vocab(), std::move(out), map.out_dim()),
          source.name(), std::move(checkpoint_id), std::move(config_hash)};
}

}  // namespace zsg

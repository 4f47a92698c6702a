#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zsg/errors.hpp"
#include "zsg/gradcheck.hpp"
#include "zsg/nn.hpp"
#include "zsg/rng.hpp"
#include "zsg/tape.hpp"
#include "zsg/textio.hpp"

namespace zsg {

enum class EncoderKind { wl, bow, gru, lstm, te };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::lstm;
  // Recurrent state size (LSTM/GRU), tanh hidden width (BoW), or
  // feed-forward width (TE).
  std::size_t hidden = 2048;
  std::size_t layers = 1;
  std::size_t heads = 16;  // TE only
  bool positional = true;  // TE only

  bool operator==(const EncoderConfig&) const = default;

  std::string name() const {
    switch (kind) {
      case EncoderKind::wl: return "wl";
      case EncoderKind::bow: return "bow";
      case EncoderKind::gru: return "gru";
      case EncoderKind::lstm: return "lstm";
      case EncoderKind::te: return "te:" + std::to_string(layers);
    }
    return "lstm";
  }
};

// wl | bow | gru | lstm | te:<layers>. Only the kind and layer count are
// taken from the name; widths stay at their defaults.
inline EncoderConfig parse_encoder(std::string_view spec) {
  EncoderConfig cfg;
  const auto colon = spec.find(':');
  const std::string_view kind = spec.substr(0, colon);
  if (colon != std::string_view::npos) {
    if (!text::try_parse_size(spec.substr(colon + 1), cfg.layers) || cfg.layers == 0) {
      throw ConfigError("bad encoder layer count in '" + std::string(spec) + "'");
    }
  }
  if (kind == "wl") cfg.kind = EncoderKind::wl;
  else if (kind == "bow") cfg.kind = EncoderKind::bow;
  else if (kind == "gru") cfg.kind = EncoderKind::gru;
  else if (kind == "lstm") cfg.kind = EncoderKind::lstm;
  else if (kind == "te") cfg.kind = EncoderKind::te;
  else throw ConfigError("unknown encoder '" + std::string(spec) + "' (expected wl, bow, gru, lstm, te:N)");
  return cfg;
}

// Maps a batch of grounded token sequences to image-vector predictions.
// tokens stacks all sequences row-wise (sum(lengths) x input_dim).
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual EncoderKind kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;
  virtual Tensor forward(Tape& tape, const Tensor& tokens, std::span<const std::size_t> lengths) const = 0;
  virtual std::vector<NamedParam> parameters() const = 0;
};

namespace detail {

inline void check_batch(const Tensor& tokens, std::span<const std::size_t> lengths, std::size_t input_dim) {
  if (lengths.empty()) throw DimensionError("encoder called with an empty batch");
  std::size_t total = 0;
  for (std::size_t len : lengths) {
    if (len == 0) throw DimensionError("encoder called with an empty sequence");
    total += len;
  }
  if (tokens.rank() != 2 || tokens.shape()[1] != input_dim || tokens.shape()[0] != total) {
    throw DimensionError("encoder expects " + std::to_string(total) + " x " + std::to_string(input_dim) +
                         " tokens, got " + shape_str(tokens.shape()));
  }
}

inline std::vector<std::size_t> offsets(std::span<const std::size_t> lengths) {
  std::vector<std::size_t> off(lengths.size(), 0);
  for (std::size_t b = 1; b < lengths.size(); ++b) off[b] = off[b - 1] + lengths[b - 1];
  return off;
}

// Step t input for every sequence; rows past a sequence's end are zero.
inline std::vector<Tensor> time_major_inputs(Tape& tape, const Tensor& tokens, std::span<const std::size_t> lengths) {
  const auto off = offsets(lengths);
  const std::size_t max_len = *std::max_element(lengths.begin(), lengths.end());
  std::vector<Tensor> steps;
  steps.reserve(max_len);
  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<std::size_t> idx(lengths.size());
    for (std::size_t b = 0; b < lengths.size(); ++b) idx[b] = t < lengths[b] ? off[b] + t : Tape::zero_row;
    steps.push_back(tape.gather_rows(tokens, std::move(idx)));
  }
  return steps;
}

}  // namespace detail

// Word-level: each "sequence" is a single word and the grounded vector is
// the prediction itself.
class WordLevelEncoder final : public Encoder {
 public:
  explicit WordLevelEncoder(std::size_t dim) : dim_(dim) {}
  EncoderKind kind() const override { return EncoderKind::wl; }
  std::size_t input_dim() const override { return dim_; }
  std::size_t output_dim() const override { return dim_; }
  Tensor forward(Tape&, const Tensor& tokens, std::span<const std::size_t> lengths) const override {
    detail::check_batch(tokens, lengths, dim_);
    for (std::size_t len : lengths) {
      if (len != 1) throw DimensionError("word-level encoder takes one token per sample");
    }
    return tokens;
  }
  std::vector<NamedParam> parameters() const override { return {}; }

 private:
  std::size_t dim_;
};

// Mean of the token vectors -> tanh hidden layer -> linear projection.
class BowEncoder final : public Encoder {
 public:
  BowEncoder(std::size_t input, std::size_t hidden, std::size_t output, Rng& rng)
      : hidden_(input, hidden, rng), proj_(hidden, output, rng) {}

  EncoderKind kind() const override { return EncoderKind::bow; }
  std::size_t input_dim() const override { return hidden_.in_dim(); }
  std::size_t output_dim() const override { return proj_.out_dim(); }

  Tensor forward(Tape& tape, const Tensor& tokens, std::span<const std::size_t> lengths) const override {
    detail::check_batch(tokens, lengths, input_dim());
    const Tensor mean = tape.segment_mean(tokens, lengths);
    return proj_.forward(tape, tape.tanh(hidden_.forward(tape, mean)));
  }

  std::vector<NamedParam> parameters() const override {
    std::vector<NamedParam> out;
    hidden_.collect("bow.hidden", out);
    proj_.collect("bow.proj", out);
    return out;
  }

  nn::Linear& hidden_layer() { return hidden_; }
  nn::Linear& projection() { return proj_; }

 private:
  nn::Linear hidden_;
  nn::Linear proj_;
};

// Shared plumbing for the recurrent encoders: stacked layers, zero initial
// state, state read at each sequence's true last token, optional
// projection when the state size differs from the output size.
class RecurrentEncoder : public Encoder {
 public:
  std::size_t input_dim() const override { return input_; }
  std::size_t output_dim() const override { return has_proj_ ? proj_.out_dim() : hidden_; }
  std::size_t hidden() const { return hidden_; }

  Tensor forward(Tape& tape, const Tensor& tokens, std::span<const std::size_t> lengths) const override {
    detail::check_batch(tokens, lengths, input_);
    std::vector<Tensor> seq = detail::time_major_inputs(tape, tokens, lengths);
    for (std::size_t l = 0; l < num_layers(); ++l) seq = run_layer(tape, l, seq, lengths.size());
    Tensor last = tape.pick_last(seq, lengths);
    return has_proj_ ? proj_.forward(tape, last) : last;
  }

  std::vector<NamedParam> parameters() const override {
    std::vector<NamedParam> out = cell_parameters();
    if (has_proj_) proj_.collect(prefix() + ".proj", out);
    return out;
  }

 protected:
  RecurrentEncoder(std::size_t input, std::size_t hidden, std::size_t output)
      : input_(input), hidden_(hidden), output_(output) {}

  // Called by subclasses after their cells so the draw order is cells first.
  void init_projection(Rng& rng) {
    has_proj_ = hidden_ != output_;
    if (has_proj_) proj_ = nn::Linear(hidden_, output_, rng);
  }

  virtual std::size_t num_layers() const = 0;
  virtual std::string prefix() const = 0;
  virtual std::vector<NamedParam> cell_parameters() const = 0;
  virtual std::vector<Tensor> run_layer(Tape& tape, std::size_t layer, const std::vector<Tensor>& inputs,
                                        std::size_t batch) const = 0;

  std::size_t input_;
  std::size_t hidden_;
  std::size_t output_;

 private:
  bool has_proj_ = false;
  nn::Linear proj_;
};

// Standard LSTM with forget gate, no peepholes:
//   i = s(x Wi + h Ui + bi)   f = s(x Wf + h Uf + bf)
//   g = tanh(x Wg + h Ug + bg) o = s(x Wo + h Uo + bo)
//   c' = f*c + i*g            h' = o * tanh(c')
class LstmEncoder final : public RecurrentEncoder {
 public:
  struct Cell {
    Tensor W[4];  // input weights, gate order i f g o
    Tensor U[4];  // recurrent weights
    Tensor b[4];
  };

  LstmEncoder(std::size_t input, std::size_t hidden, std::size_t output, std::size_t layers, Rng& rng)
      : RecurrentEncoder(input, hidden, output) {
    if (layers == 0) throw ConfigError("lstm needs at least one layer");
    for (std::size_t l = 0; l < layers; ++l) {
      Cell c;
      const std::size_t in = l == 0 ? input : hidden;
      for (int g = 0; g < 4; ++g) c.W[g] = nn::glorot(in, hidden, rng);
      for (int g = 0; g < 4; ++g) c.U[g] = nn::glorot(hidden, hidden, rng);
      for (int g = 0; g < 4; ++g) c.b[g] = nn::zeros_param(hidden);
      cells_.push_back(std::move(c));
    }
    init_projection(rng);
  }

  EncoderKind kind() const override { return EncoderKind::lstm; }
  std::vector<Cell>& cells() { return cells_; }

 protected:
  std::size_t num_layers() const override { return cells_.size(); }
  std::string prefix() const override { return "lstm"; }

  std::vector<NamedParam> cell_parameters() const override {
    static constexpr const char* gates[4] = {"i", "f", "g", "o"};
    std::vector<NamedParam> out;
    for (std::size_t l = 0; l < cells_.size(); ++l) {
      const std::string p = "lstm." + std::to_string(l) + ".";
      for (int g = 0; g < 4; ++g) out.push_back({p + "W_" + gates[g], cells_[l].W[g]});
      for (int g = 0; g < 4; ++g) out.push_back({p + "U_" + gates[g], cells_[l].U[g]});
      for (int g = 0; g < 4; ++g) out.push_back({p + "b_" + gates[g], cells_[l].b[g]});
    }
    return out;
  }

  std::vector<Tensor> run_layer(Tape& tape, std::size_t layer, const std::vector<Tensor>& inputs,
                                std::size_t batch) const override {
    const Cell& cell = cells_[layer];
    Tensor h = Tensor::zeros({batch, hidden_});
    Tensor c = Tensor::zeros({batch, hidden_});
    auto gate = [&](const Tensor& x, int g) {
      return tape.add_bias(tape.add(tape.matmul(x, cell.W[g]), tape.matmul(h, cell.U[g])), cell.b[g]);
    };
    std::vector<Tensor> out;
    out.reserve(inputs.size());
    for (const Tensor& x : inputs) {
      const Tensor i = tape.sigmoid(gate(x, 0));
      const Tensor f = tape.sigmoid(gate(x, 1));
      const Tensor g = tape.tanh(gate(x, 2));
      const Tensor o = tape.sigmoid(gate(x, 3));
      c = tape.add(tape.mul(f, c), tape.mul(i, g));
      h = tape.mul(o, tape.tanh(c));
      out.push_back(h);
    }
    return out;
  }

 private:
  std::vector<Cell> cells_;
};

// GRU in the original formulation:
//   z = s(x Wz + h Uz + bz)   r = s(x Wr + h Ur + br)
//   n = tanh(x Wn + (r*h) Un + bn)
//   h' = (1 - z) * n + z * h
class GruEncoder final : public RecurrentEncoder {
 public:
  struct Cell {
    Tensor W[3];  // gate order z r n
    Tensor U[3];
    Tensor b[3];
  };

  GruEncoder(std::size_t input, std::size_t hidden, std::size_t output, std::size_t layers, Rng& rng)
      : RecurrentEncoder(input, hidden, output) {
    if (layers == 0) throw ConfigError("gru needs at least one layer");
    for (std::size_t l = 0; l < layers; ++l) {
      Cell c;
      const std::size_t in = l == 0 ? input : hidden;
      for (int g = 0; g < 3; ++g) c.W[g] = nn::glorot(in, hidden, rng);
      for (int g = 0; g < 3; ++g) c.U[g] = nn::glorot(hidden, hidden, rng);
      for (int g = 0; g < 3; ++g) c.b[g] = nn::zeros_param(hidden);
      cells_.push_back(std::move(c));
    }
    init_projection(rng);
  }

  EncoderKind kind() const override { return EncoderKind::gru; }
  std::vector<Cell>& cells() { return cells_; }

 protected:
  std::size_t num_layers() const override { return cells_.size(); }
  std::string prefix() const override { return "gru"; }

  std::vector<NamedParam> cell_parameters() const override {
    static constexpr const char* gates[3] = {"z", "r", "n"};
    std::vector<NamedParam> out;
    for (std::size_t l = 0; l < cells_.size(); ++l) {
      const std::string p = "gru." + std::to_string(l) + ".";
      for (int g = 0; g < 3; ++g) out.push_back({p + "W_" + gates[g], cells_[l].W[g]});
      for (int g = 0; g < 3; ++g) out.push_back({p + "U_" + gates[g], cells_[l].U[g]});
      for (int g = 0; g < 3; ++g) out.push_back({p + "b_" + gates[g], cells_[l].b[g]});
    }
    return out;
  }

  std::vector<Tensor> run_layer(Tape& tape, std::size_t layer, const std::vector<Tensor>& inputs,
                                std::size_t batch) const override {
    const Cell& cell = cells_[layer];
    Tensor h = Tensor::zeros({batch, hidden_});
    std::vector<Tensor> out;
    out.reserve(inputs.size());
    for (const Tensor& x : inputs) {
      const Tensor z = tape.sigmoid(
          tape.add_bias(tape.add(tape.matmul(x, cell.W[0]), tape.matmul(h, cell.U[0])), cell.b[0]));
      const Tensor r = tape.sigmoid(
          tape.add_bias(tape.add(tape.matmul(x, cell.W[1]), tape.matmul(h, cell.U[1])), cell.b[1]));
      const Tensor n = tape.tanh(
          tape.add_bias(tape.add(tape.matmul(x, cell.W[2]), tape.matmul(tape.mul(r, h), cell.U[2])), cell.b[2]));
      // h' = n + z * (h - n)
      h = tape.add(n, tape.mul(z, tape.sub(h, n)));
      out.push_back(h);
    }
    return out;
  }

 private:
  std::vector<Cell> cells_;
};

// Fixed sinusoidal positional encoding, n x dim.
inline Tensor sinusoidal_positions(std::size_t n, std::size_t dim) {
  std::vector<double> pe(n * dim);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) / rate;
      pe[pos * dim + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from({n, dim}, std::move(pe));
}

// Post-norm transformer encoder stack over the grounded tokens, mean-pooled
// over positions and projected to the output size.
class TransformerEncoder final : public Encoder {
 public:
  struct Block {
    nn::Linear q, k, v, o;
    Tensor ln1_gain, ln1_bias;
    nn::Linear ff1, ff2;
    Tensor ln2_gain, ln2_bias;
  };

  static constexpr double layer_norm_eps = 1e-5;

  TransformerEncoder(std::size_t model_dim, std::size_t ffn_dim, std::size_t output, std::size_t layers,
                     std::size_t heads, bool positional, Rng& rng)
      : model_dim_(model_dim), heads_(heads), positional_(positional) {
    if (layers == 0) throw ConfigError("transformer encoder needs at least one layer");
    if (heads == 0 || model_dim % heads != 0) {
      throw ConfigError("transformer model dim " + std::to_string(model_dim) + " not divisible by " +
                        std::to_string(heads) + " heads");
    }
    for (std::size_t l = 0; l < layers; ++l) {
      Block b;
      b.q = nn::Linear(model_dim, model_dim, rng);
      b.k = nn::Linear(model_dim, model_dim, rng);
      b.v = nn::Linear(model_dim, model_dim, rng);
      b.o = nn::Linear(model_dim, model_dim, rng);
      b.ln1_gain = nn::filled_param(model_dim, 1.0);
      b.ln1_bias = nn::zeros_param(model_dim);
      b.ff1 = nn::Linear(model_dim, ffn_dim, rng);
      b.ff2 = nn::Linear(ffn_dim, model_dim, rng);
      b.ln2_gain = nn::filled_param(model_dim, 1.0);
      b.ln2_bias = nn::zeros_param(model_dim);
      blocks_.push_back(std::move(b));
    }
    proj_ = nn::Linear(model_dim, output, rng);
  }

  EncoderKind kind() const override { return EncoderKind::te; }
  std::size_t input_dim() const override { return model_dim_; }
  std::size_t output_dim() const override { return proj_.out_dim(); }

  Tensor forward(Tape& tape, const Tensor& tokens, std::span<const std::size_t> lengths) const override {
    detail::check_batch(tokens, lengths, model_dim_);
    const auto off = detail::offsets(lengths);
    std::vector<Tensor> pooled;
    pooled.reserve(lengths.size());
    for (std::size_t s = 0; s < lengths.size(); ++s) {
      std::vector<std::size_t> idx(lengths[s]);
      std::iota(idx.begin(), idx.end(), off[s]);
      Tensor x = tape.gather_rows(tokens, std::move(idx));
      if (positional_) x = tape.add(x, sinusoidal_positions(lengths[s], model_dim_));
      for (const Block& b : blocks_) x = block_forward(tape, b, x);
      pooled.push_back(tape.reshape(tape.reduce(x, ReduceKind::mean, 0), {1, model_dim_}));
    }
    return proj_.forward(tape, tape.concat_rows(pooled));
  }

  std::vector<NamedParam> parameters() const override {
    std::vector<NamedParam> out;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const std::string p = "te." + std::to_string(l) + ".";
      const Block& b = blocks_[l];
      b.q.collect(p + "q", out);
      b.k.collect(p + "k", out);
      b.v.collect(p + "v", out);
      b.o.collect(p + "o", out);
      out.push_back({p + "ln1.gain", b.ln1_gain});
      out.push_back({p + "ln1.bias", b.ln1_bias});
      b.ff1.collect(p + "ff1", out);
      b.ff2.collect(p + "ff2", out);
      out.push_back({p + "ln2.gain", b.ln2_gain});
      out.push_back({p + "ln2.bias", b.ln2_bias});
    }
    proj_.collect("te.proj", out);
    return out;
  }

 private:
  Tensor block_forward(Tape& tape, const Block& b, const Tensor& x) const {
    const Tensor q = b.q.forward(tape, x);
    const Tensor k = b.k.forward(tape, x);
    const Tensor v = b.v.forward(tape, x);
    const std::size_t dk = model_dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<Tensor> head_out;
    head_out.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
      const Tensor qh = tape.slice_cols(q, h * dk, dk);
      const Tensor kh = tape.slice_cols(k, h * dk, dk);
      const Tensor vh = tape.slice_cols(v, h * dk, dk);
      const Tensor scores = tape.affine(tape.matmul(qh, tape.transpose(kh)), scale);
      head_out.push_back(tape.matmul(tape.softmax(scores, 1), vh));
    }
    const Tensor attn = b.o.forward(tape, heads_ == 1 ? head_out.front() : tape.concat_cols(head_out));
    const Tensor x1 = tape.layer_norm(tape.add(x, attn), b.ln1_gain, b.ln1_bias, layer_norm_eps);
    const Tensor ff = b.ff2.forward(tape, tape.activation(b.ff1.forward(tape, x1), Activation::relu()));
    return tape.layer_norm(tape.add(x1, ff), b.ln2_gain, b.ln2_bias, layer_norm_eps);
  }

  std::size_t model_dim_;
  std::size_t heads_;
  bool positional_;
  std::vector<Block> blocks_;
  nn::Linear proj_;
};

inline std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg, std::size_t input, std::size_t output,
                                             Rng& rng) {
  switch (cfg.kind) {
    case EncoderKind::wl:
      if (input != output) {
        throw ConfigError("word-level model needs grounded dim == target dim (" + std::to_string(input) +
                          " vs " + std::to_string(output) + ")");
      }
      return std::make_unique<WordLevelEncoder>(input);
    case EncoderKind::bow: return std::make_unique<BowEncoder>(input, cfg.hidden, output, rng);
    case EncoderKind::gru: return std::make_unique<GruEncoder>(input, cfg.hidden, output, cfg.layers, rng);
    case EncoderKind::lstm: return std::make_unique<LstmEncoder>(input, cfg.hidden, output, cfg.layers, rng);
    case EncoderKind::te:
      return std::make_unique<TransformerEncoder>(input, cfg.hidden, output, cfg.layers, cfg.heads, cfg.positional,
                                                  rng);
  }
  throw ConfigError("unknown encoder kind");
}

}  // namespace zsg

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "zsg/alignment.hpp"
#include "zsg/embedding.hpp"
#include "zsg/encoders.hpp"
#include "zsg/errors.hpp"
#include "zsg/gradcheck.hpp"
#include "zsg/rng.hpp"
#include "zsg/tape.hpp"
#include "zsg/textio.hpp"

namespace zsg {

struct ModelConfig {
  std::size_t text_dim = 300;
  std::size_t grounded_dim = 1024;
  std::size_t image_dim = 2048;
  AlignmentConfig alignment;
  EncoderConfig encoder;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;

  // Flat "key value" lines; the checkpoint header and the config hash are
  // both built from this.
  std::string describe() const {
    std::ostringstream os;
    os << "text_dim " << text_dim << '\n'
       << "grounded_dim " << grounded_dim << '\n'
       << "image_dim " << image_dim << '\n'
       << "align " << alignment.name() << '\n'
       << "align_alpha " << text::format_double(alignment.activation.alpha) << '\n'
       << "encoder " << encoder.name() << '\n'
       << "hidden " << encoder.hidden << '\n'
       << "layers " << encoder.layers << '\n'
       << "heads " << encoder.heads << '\n'
       << "positional " << (encoder.positional ? 1 : 0) << '\n'
       << "seed " << seed << '\n';
    return os.str();
  }
};

// FNV-1a 64, hex.
inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

// Alignment M followed by a sentence encoder. Only M is used at inference
// time for grounding; the encoder exists to train it.
class GroundingModel {
 public:
  explicit GroundingModel(const ModelConfig& config) : config_(config) {
    Rng rng(config.seed);
    align_ = AlignmentMap(config.alignment, config.text_dim, config.grounded_dim, rng);
    encoder_ = make_encoder(config.encoder, config.grounded_dim, config.image_dim, rng);
    if (encoder_->output_dim() != config.image_dim) {
      throw ConfigError("encoder output dim " + std::to_string(encoder_->output_dim()) + " != image dim " +
                        std::to_string(config.image_dim));
    }
  }

  GroundingModel(GroundingModel&&) = default;
  GroundingModel& operator=(GroundingModel&&) = default;

  const ModelConfig& config() const noexcept { return config_; }
  const AlignmentMap& alignment() const noexcept { return align_; }
  const Encoder& encoder() const noexcept { return *encoder_; }
  Encoder& encoder() noexcept { return *encoder_; }

  // token_vectors stacks the textual vectors of every caption in the batch.
  Tensor forward(Tape& tape, const Tensor& token_vectors, std::span<const std::size_t> lengths) const {
    return encoder_->forward(tape, align_.forward(tape, token_vectors), lengths);
  }

  std::vector<NamedParam> parameters() const {
    std::vector<NamedParam> out = align_.parameters();
    for (auto& p : encoder_->parameters()) out.push_back(std::move(p));
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
  }

  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> out;
    for (const auto& p : parameters()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    return out;
  }

  void restore(const std::vector<std::vector<double>>& values) {
    auto params = parameters();
    if (values.size() != params.size()) throw DimensionError("restore: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto dst = params[i].tensor.mutable_data();
      if (dst.size() != values[i].size()) throw DimensionError("restore: size mismatch for " + params[i].name);
      std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
  }

  std::string config_hash() const { return fnv1a_hex(config_.describe()); }

 private:
  ModelConfig config_;
  AlignmentMap align_;
  std::unique_ptr<Encoder> encoder_;
};

// Looks up each token, drops OOV ones, and runs the full model on the
// resulting single caption.
inline std::vector<double> predict_image(const GroundingModel& model, const std::vector<std::string>& tokens,
                                         const EmbeddingTable& table) {
  if (table.dim() != model.config().text_dim) {
    throw DimensionError("predict_image: table dim " + std::to_string(table.dim()) + " but model expects " +
                         std::to_string(model.config().text_dim));
  }
  std::vector<double> rows;
  std::size_t n = 0;
  for (const auto& tok : tokens) {
    if (auto r = table.lookup(tok)) {
      rows.insert(rows.end(), r->begin(), r->end());
      ++n;
    }
  }
  if (n == 0) throw DataError("predict_image: no caption token is in the embedding vocabulary");
  Tape tape;
  const std::size_t lengths[1] = {n};
  const Tensor out = model.forward(tape, Tensor::from({n, table.dim()}, std::move(rows)), lengths);
  return {out.data().begin(), out.data().end()};
}

inline constexpr const char* checkpoint_magic = "zsg-checkpoint";
inline constexpr int checkpoint_version = 1;

inline void write_checkpoint(std::ostream& out, const GroundingModel& model) {
  const auto params = model.parameters();
  out << checkpoint_magic << ' ' << checkpoint_version << '\n';
  out << model.config().describe();
  out << "params " << params.size() << '\n';
  for (const auto& p : params) {
    const std::size_t rows = p.tensor.rank() == 2 ? p.tensor.shape()[0] : 1;
    const std::size_t cols = p.tensor.cols();
    out << "param " << p.name << ' ' << rows << ' ' << cols << '\n';
    for (std::size_t r = 0; r < rows; ++r) {
      out << text::join_doubles(p.tensor.data().subspan(r * cols, cols)) << '\n';
    }
  }
  out << "end\n";
}

inline GroundingModel read_checkpoint(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::vector<std::string_view> {
    if (!std::getline(in, line)) throw DataError("checkpoint truncated at line " + std::to_string(lineno + 1));
    ++lineno;
    return text::split_ws(text::strip_cr(line));
  };
  auto head = next();
  if (head.size() != 2 || head[0] != checkpoint_magic) throw DataError("not a zsg checkpoint");
  if (text::parse_size(head[1], "checkpoint version") != checkpoint_version) {
    throw DataError("unsupported checkpoint version " + std::string(head[1]));
  }
  std::map<std::string, std::string> kv;
  for (;;) {
    auto f = next();
    if (f.size() != 2) throw DataError("checkpoint: malformed config line " + std::to_string(lineno));
    if (f[0] == "params") {
      kv["params"] = std::string(f[1]);
      break;
    }
    kv[std::string(f[0])] = std::string(f[1]);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(std::string("checkpoint missing '") + key + "'");
    return it->second;
  };
  ModelConfig cfg;
  cfg.text_dim = text::parse_size(get("text_dim"), "text_dim");
  cfg.grounded_dim = text::parse_size(get("grounded_dim"), "grounded_dim");
  cfg.image_dim = text::parse_size(get("image_dim"), "image_dim");
  const double alpha = text::parse_double(get("align_alpha"), "align_alpha");
  cfg.alignment = parse_alignment(get("align"), alpha);
  cfg.alignment.activation.alpha = alpha;
  cfg.encoder = parse_encoder(get("encoder"));
  cfg.encoder.hidden = text::parse_size(get("hidden"), "hidden");
  cfg.encoder.layers = text::parse_size(get("layers"), "layers");
  cfg.encoder.heads = text::parse_size(get("heads"), "heads");
  cfg.encoder.positional = get("positional") == "1";
  cfg.seed = text::parse_size(get("seed"), "seed");

  GroundingModel model(cfg);
  auto params = model.parameters();
  if (text::parse_size(get("params"), "params") != params.size()) {
    throw DataError("checkpoint parameter count does not match its config");
  }
  for (auto& p : params) {
    auto f = next();
    if (f.size() != 4 || f[0] != "param" || f[1] != p.name) {
      throw DataError("checkpoint: expected parameter block '" + p.name + "' at line " + std::to_string(lineno));
    }
    const std::size_t rows = text::parse_size(f[2], "param rows");
    const std::size_t cols = text::parse_size(f[3], "param cols");
    if (rows * cols != p.tensor.numel() || cols != p.tensor.cols()) {
      throw DataError("checkpoint: shape mismatch for '" + p.name + "'");
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t r = 0; r < rows; ++r) {
      auto vals = next();
      if (vals.size() != cols) throw DataError("checkpoint: ragged row in '" + p.name + "'");
      for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] = text::parse_double(vals[c], p.name);
    }
    require_finite(dst, "checkpoint parameters");
  }
  auto tail = next();
  if (tail.size() != 1 || tail[0] != "end") throw DataError("checkpoint: missing end marker");
  return model;
}

inline void save_checkpoint(const std::filesystem::path& path, const GroundingModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  write_checkpoint(out, model);
  if (!out) throw DataError("write failed for " + path.string());
}

inline GroundingModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace zsg

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "zsg/dataset.hpp"
#include "zsg/embedding.hpp"
#include "zsg/errors.hpp"
#include "zsg/model.hpp"
#include "zsg/nadam.hpp"
#include "zsg/pca.hpp"
#include "zsg/rng.hpp"
#include "zsg/stopwords.hpp"
#include "zsg/tape.hpp"

namespace zsg {

struct TrainConfig {
  std::size_t batch_size = 256;
  double lr = 0.001;
  std::size_t epochs = 20;
  std::size_t patience = 5;
  std::size_t vocab_top_k = 10000;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (patience == 0) throw ConfigError("patience must be positive");
    if (patience > epochs) throw ConfigError("patience must not exceed epochs");
    if (vocab_top_k == 0) throw ConfigError("vocab_top_k must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = std::numeric_limits<double>::quiet_NaN();  // NaN without a validation split
  double seconds = 0.0;
};

// Tracks the best monitored loss; stop once `patience` consecutive epochs
// fail to strictly improve on it.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when value is a new best.
  bool observe(std::size_t epoch, double value) {
    if (!best_epoch_ || value < best_value_) {
      best_value_ = value;
      best_epoch_ = epoch;
      bad_epochs_ = 0;
      return true;
    }
    ++bad_epochs_;
    return false;
  }

  bool should_stop() const noexcept { return bad_epochs_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_.value_or(0); }
  double best_value() const noexcept { return best_value_; }

 private:
  std::size_t patience_;
  std::optional<std::size_t> best_epoch_;
  double best_value_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

struct TrainResult {
  GroundingModel model;  // parameters of the best epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::size_t skipped_pairs = 0;  // pairs without any token in the source table
};

// Non-finite loss or gradient during training. Carries the parameters of the
// best epoch seen so far (initial parameters if none completed).
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, ModelConfig config, std::vector<std::vector<double>> last_good,
                  std::vector<EpochRecord> history)
      : NumericError(what), config(std::move(config)), last_good(std::move(last_good)), history(std::move(history)) {}

  GroundingModel last_good_model() const {
    GroundingModel m(config);
    m.restore(last_good);
    return m;
  }

  ModelConfig config;
  std::vector<std::vector<double>> last_good;
  std::vector<EpochRecord> history;
};

namespace detail {

struct PreparedPair {
  std::vector<std::size_t> rows;  // source-table rows, caption order
  std::size_t image;
};

inline std::vector<PreparedPair> prepare_pairs(const std::vector<CaptionImagePair>& pairs, const EmbeddingTable& source,
                                               std::size_t* skipped) {
  std::vector<PreparedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    PreparedPair q{{}, p.image};
    for (const auto& t : p.tokens) {
      if (auto i = source.index_of(t)) q.rows.push_back(*i);
    }
    if (q.rows.empty()) {
      if (skipped) ++*skipped;
      continue;
    }
    out.push_back(std::move(q));
  }
  return out;
}

struct Batch {
  Tensor tokens;
  std::vector<std::size_t> lengths;
  Tensor targets;
};

inline Batch make_batch(const std::vector<PreparedPair>& pairs, std::span<const std::size_t> order,
                        const EmbeddingTable& source, const ImageStore& images) {
  Batch b;
  std::vector<double> tok, tgt;
  std::size_t total = 0;
  for (std::size_t idx : order) {
    const auto& p = pairs[idx];
    for (std::size_t r : p.rows) {
      const auto row = source.row(r);
      tok.insert(tok.end(), row.begin(), row.end());
    }
    total += p.rows.size();
    b.lengths.push_back(p.rows.size());
    const auto img = images.vector(p.image);
    tgt.insert(tgt.end(), img.begin(), img.end());
  }
  b.tokens = Tensor::from({total, source.dim()}, std::move(tok));
  b.targets = Tensor::from({order.size(), images.dim()}, std::move(tgt));
  return b;
}

// Mean squared error over every element of every pair.
inline double evaluate(const GroundingModel& model, const std::vector<PreparedPair>& pairs, const EmbeddingTable& source,
                       const ImageStore& images, std::size_t batch_size) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    const auto batch = make_batch(pairs, std::span(order).subspan(start, n), source, images);
    Tape tape;
    sum += tape.mse_loss(model.forward(tape, batch.tokens, batch.lengths), batch.targets).item() *
           static_cast<double>(n);
  }
  return sum / static_cast<double>(pairs.size());
}

}  // namespace detail

inline double evaluate_mse(const GroundingModel& model, const std::vector<CaptionImagePair>& pairs,
                           const EmbeddingTable& source, const ImageStore& images, std::size_t batch_size = 256) {
  const auto prepared = detail::prepare_pairs(pairs, source, nullptr);
  if (prepared.empty()) throw DataError("evaluate_mse: no pair has an in-vocabulary token");
  return detail::evaluate(model, prepared, source, images, batch_size);
}

using EpochCallback = std::function<void(const EpochRecord&)>;

// Minimises the MSE between predicted and true image vectors over M and the
// encoder. The source table is read-only. Returns the best-validation-epoch
// parameters (training MSE is monitored when there is no validation split).
inline TrainResult train(const ModelConfig& model_config, const TrainConfig& config, const GroundingDataset& dataset,
                         const EmbeddingTable& source, const EpochCallback& on_epoch = {}) {
  config.validate();
  if (source.dim() != model_config.text_dim) {
    throw DimensionError("source table dim " + std::to_string(source.dim()) + " != model text dim " +
                         std::to_string(model_config.text_dim));
  }
  if (dataset.image_dim() != model_config.image_dim) {
    throw DimensionError("dataset image dim " + std::to_string(dataset.image_dim()) + " != model image dim " +
                         std::to_string(model_config.image_dim));
  }
  std::size_t skipped = 0;
  const auto train_pairs = detail::prepare_pairs(dataset.train, source, &skipped);
  const auto val_pairs = detail::prepare_pairs(dataset.val, source, &skipped);
  if (train_pairs.empty()) throw DataError("no training pair has a token in the source table");

  GroundingModel model(model_config);
  Nadam opt(model.parameters(), config.lr);
  Rng rng(config.seed);
  EarlyStopping stopper(config.patience);
  auto best = model.snapshot();
  std::vector<EpochRecord> history;
  bool stopped_early = false;

  std::vector<std::size_t> order(train_pairs.size());
  try {
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      double sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t n = std::min(config.batch_size, order.size() - start);
        const auto batch = detail::make_batch(train_pairs, std::span(order).subspan(start, n), source, dataset.images);
        opt.zero_grad();
        Tape tape;
        const Tensor loss = tape.mse_loss(model.forward(tape, batch.tokens, batch.lengths), batch.targets);
        tape.backward(loss);
        opt.step();
        sum += loss.item() * static_cast<double>(n);
      }
      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_mse = sum / static_cast<double>(train_pairs.size());
      if (!val_pairs.empty()) {
        rec.val_mse = detail::evaluate(model, val_pairs, source, dataset.images, config.batch_size);
      }
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      history.push_back(rec);
      if (on_epoch) on_epoch(rec);

      const double monitored = val_pairs.empty() ? rec.train_mse : rec.val_mse;
      if (stopper.observe(epoch, monitored)) best = model.snapshot();
      if (stopper.should_stop()) {
        stopped_early = epoch < config.epochs;
        break;
      }
    }
  } catch (const NumericError& e) {
    throw DivergenceError(std::string("training diverged: ") + e.what(), model_config, best, history);
  }
  model.restore(best);
  return TrainResult{std::move(model), std::move(history), stopper.best_epoch(), stopped_early, skipped};
}

// Caption tokens minus stop words, in caption order.
inline std::vector<std::string> content_tokens(const std::vector<std::string>& tokens,
                                               const std::unordered_set<std::string>& stopwords = default_stopwords()) {
  std::vector<std::string> out;
  for (const auto& t : tokens)
    if (!stopwords.contains(t)) out.push_back(t);
  return out;
}

struct WordLevelResult {
  TrainResult trained;
  PcaProjection pca;
  std::size_t samples = 0;          // (word, image) training samples
  std::size_t dropped_captions = 0;  // captions with only stop words
};

// Word-level baseline: every content word of a caption is regressed onto
// the PCA-reduced image vector through M alone. The PCA target size must
// equal M's output size; it is fitted on the training images when not given.
inline WordLevelResult train_wl(ModelConfig model_config, const TrainConfig& config, const GroundingDataset& dataset,
                                const EmbeddingTable& source,
                                const std::unordered_set<std::string>& stopwords = default_stopwords(),
                                std::optional<PcaProjection> pca = std::nullopt, const EpochCallback& on_epoch = {}) {
  model_config.encoder.kind = EncoderKind::wl;
  if (!pca) {
    std::vector<std::size_t> used;
    std::vector<char> seen(dataset.images.size(), 0);
    for (const auto& p : dataset.train) {
      if (!seen[p.image]) {
        seen[p.image] = 1;
        used.push_back(p.image);
      }
    }
    std::sort(used.begin(), used.end());
    std::vector<double> data;
    for (std::size_t i : used) {
      const auto v = dataset.images.vector(i);
      data.insert(data.end(), v.begin(), v.end());
    }
    pca = pca_fit(data, used.size(), dataset.image_dim(), model_config.grounded_dim);
  }
  if (pca->k != model_config.grounded_dim) {
    throw ConfigError("PCA target dim " + std::to_string(pca->k) + " must equal the alignment output dim " +
                      std::to_string(model_config.grounded_dim));
  }
  if (pca->dim != dataset.image_dim()) throw DimensionError("PCA input dim does not match the image vectors");
  model_config.image_dim = pca->k;

  GroundingDataset words;
  words.images = ImageStore(pca->k);
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    words.images.add(dataset.images.ids()[i], pca_apply(*pca, dataset.images.vector(i)));
  }
  words.vocab = dataset.vocab;
  std::size_t dropped = 0;
  auto expand = [&](const std::vector<CaptionImagePair>& in, std::vector<CaptionImagePair>& out) {
    for (const auto& p : in) {
      const auto words = content_tokens(p.tokens, stopwords);
      if (words.empty()) ++dropped;
      for (const auto& t : words) out.push_back({{t}, p.image});
    }
  };
  expand(dataset.train, words.train);
  expand(dataset.val, words.val);
  if (words.train.empty()) throw DataError("word-level training set is empty after stop-word removal");

  WordLevelResult r{train(model_config, config, words, source, on_epoch), std::move(*pca), words.train.size(),
                    dropped};
  return r;
}

}  // namespace zsg

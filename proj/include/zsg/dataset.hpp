#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "zsg/embedding.hpp"
#include "zsg/errors.hpp"
#include "zsg/textio.hpp"

namespace zsg {

// Removes ASCII punctuation, lower-cases ASCII letters and splits on
// whitespace runs. Non-ASCII bytes pass through unchanged.
inline std::vector<std::string> preprocess_caption(std::string_view caption) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char ch : caption) {
    if (ch < 0x80 && std::ispunct(ch)) continue;
    if (ch < 0x80 && std::isspace(ch)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur.push_back(ch < 0x80 ? static_cast<char>(std::tolower(ch)) : static_cast<char>(ch));
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// The k most frequent tokens; equal counts are ordered lexicographically.
inline std::vector<std::string> build_vocab(const std::vector<std::vector<std::string>>& captions, std::size_t k) {
  if (k == 0) throw ConfigError("vocabulary size must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& c : captions)
    for (const auto& t : c) ++counts[t];
  if (counts.empty()) throw DataError("no tokens to build a vocabulary from");
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (items.size() > k) items.resize(k);
  std::vector<std::string> vocab;
  vocab.reserve(items.size());
  for (auto& [w, n] : items) vocab.push_back(std::move(w));
  return vocab;
}

// Precomputed image feature vectors keyed by id.
class ImageStore {
 public:
  ImageStore() = default;
  explicit ImageStore(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  void add(std::string id, std::span<const double> vec) {
    if (vec.size() != dim_) {
      throw DataError("image '" + id + "' has dim " + std::to_string(vec.size()) + ", expected " +
                      std::to_string(dim_));
    }
    require_finite(vec, "image vector");
    if (!index_.emplace(id, ids_.size()).second) throw DataError("duplicate image id '" + id + "'");
    ids_.push_back(std::move(id));
    values_.insert(values_.end(), vec.begin(), vec.end());
  }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const double> vector(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * dim_, dim_);
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Header "N dim", then "image_id f1 ... fdim" per line.
inline ImageStore read_image_vectors(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<ImageStore> store;
  std::size_t declared = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = text::split_ws(text::strip_cr(line));
    if (f.empty()) continue;
    if (!store) {
      if (f.size() != 2) throw DataError("image-vectors file must start with an 'N dim' header");
      declared = text::parse_size(f[0], "image-vectors header");
      const std::size_t dim = text::parse_size(f[1], "image-vectors header");
      if (dim == 0) throw DataError("image-vectors header declares dim 0");
      store.emplace(dim);
      continue;
    }
    const std::string ctx = "image-vectors line " + std::to_string(lineno);
    std::vector<double> v;
    v.reserve(f.size() - 1);
    for (std::size_t j = 1; j < f.size(); ++j) v.push_back(text::parse_double(f[j], ctx));
    store->add(std::string(f[0]), v);
  }
  if (!store || store->size() == 0) throw DataError("image-vectors file holds no images");
  if (declared != store->size()) {
    throw DataError("image-vectors header declares " + std::to_string(declared) + " images, file has " +
                    std::to_string(store->size()));
  }
  return std::move(*store);
}

enum class Split { train, val };

struct CaptionRecord {
  std::string image_id;
  std::string text;
  std::optional<Split> split;
};

// "image_id<TAB>caption[<TAB>train|val]" per line.
inline std::vector<CaptionRecord> read_captions(std::istream& in) {
  std::vector<CaptionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto l = text::strip_cr(line);
    if (l.empty()) continue;
    const auto f = text::split(l, '\t');
    if (f.size() < 2 || f.size() > 3 || f[0].empty()) {
      throw DataError("captions line " + std::to_string(lineno) + ": expected image_id<TAB>caption[<TAB>split]");
    }
    CaptionRecord r{std::string(f[0]), std::string(f[1]), std::nullopt};
    if (f.size() == 3) {
      if (f[2] == "train") r.split = Split::train;
      else if (f[2] == "val") r.split = Split::val;
      else throw DataError("captions line " + std::to_string(lineno) + ": split must be train or val");
    }
    out.push_back(std::move(r));
  }
  return out;
}

struct CaptionImagePair {
  std::vector<std::string> tokens;
  std::size_t image = 0;  // index into GroundingDataset::images
};

struct GroundingDataset {
  ImageStore images;
  std::vector<CaptionImagePair> train;
  std::vector<CaptionImagePair> val;
  std::vector<std::string> vocab;
  std::size_t dropped_empty = 0;  // captions with no surviving token

  std::size_t image_dim() const { return images.dim(); }
};

struct DatasetOptions {
  std::size_t vocab_top_k = 10000;
  // Used only when no caption carries an explicit split: the last
  // round(ratio * images) images (file order) form the validation set.
  double val_ratio = 0.0;
  // When set, tokens missing from this table are dropped as well.
  const EmbeddingTable* table = nullptr;
};

// One pair per caption. The vocabulary is built from training captions.
inline GroundingDataset build_dataset(const std::vector<CaptionRecord>& records, ImageStore images,
                                      const DatasetOptions& opts = {}) {
  if (records.empty()) throw DataError("dataset has no captions");
  if (opts.val_ratio < 0.0 || opts.val_ratio >= 1.0) throw ConfigError("val ratio must be in [0, 1)");
  const bool explicit_split = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.split; });
  const std::size_t n_val_images =
      explicit_split ? 0 : static_cast<std::size_t>(std::llround(opts.val_ratio * static_cast<double>(images.size())));

  GroundingDataset ds;
  std::vector<std::vector<std::string>> tokens(records.size());
  std::vector<std::size_t> image_of(records.size());
  std::vector<Split> split_of(records.size());
  std::vector<std::vector<std::string>> train_tokens;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto img = images.find(records[i].image_id);
    if (!img) throw DataError("caption refers to unknown image id '" + records[i].image_id + "'");
    image_of[i] = *img;
    if (explicit_split) {
      split_of[i] = records[i].split.value_or(Split::train);
    } else {
      split_of[i] = *img + n_val_images >= images.size() ? Split::val : Split::train;
    }
    tokens[i] = preprocess_caption(records[i].text);
    if (split_of[i] == Split::train) train_tokens.push_back(tokens[i]);
  }
  if (train_tokens.empty()) throw DataError("dataset has no training captions");
  ds.vocab = build_vocab(train_tokens, opts.vocab_top_k);
  const std::unordered_set<std::string> keep(ds.vocab.begin(), ds.vocab.end());

  for (std::size_t i = 0; i < records.size(); ++i) {
    CaptionImagePair pair;
    pair.image = image_of[i];
    for (auto& t : tokens[i]) {
      if (keep.contains(t) && (!opts.table || opts.table->contains(t))) pair.tokens.push_back(std::move(t));
    }
    if (pair.tokens.empty()) {
      ++ds.dropped_empty;
      continue;
    }
    (split_of[i] == Split::train ? ds.train : ds.val).push_back(std::move(pair));
  }
  if (ds.train.empty()) throw DataError("no training caption survives vocabulary filtering");
  ds.images = std::move(images);
  return ds;
}

inline GroundingDataset load_dataset(const std::filesystem::path& captions_path,
                                     const std::filesystem::path& images_path, const DatasetOptions& opts = {}) {
  std::ifstream cin_(captions_path);
  if (!cin_) throw DataError("cannot open captions file " + captions_path.string());
  std::ifstream iin(images_path);
  if (!iin) throw DataError("cannot open image-vectors file " + images_path.string());
  auto images = read_image_vectors(iin);
  return build_dataset(read_captions(cin_), std::move(images), opts);
}

}  // namespace zsg

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "zsg/errors.hpp"
#include "zsg/tensor.hpp"
#include "zsg/textio.hpp"

namespace zsg {

// Vocabulary with one dense row per word. Immutable after construction.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  EmbeddingTable(std::string name, std::vector<std::string> vocab, std::vector<double> values,
                 std::size_t dim)
      : name_(std::move(name)), vocab_(std::move(vocab)), values_(std::move(values)), dim_(dim) {
    if (dim_ == 0) throw DimensionError("embedding dimension must be >= 1");
    if (values_.size() != vocab_.size() * dim_) {
      throw DimensionError("embedding table '" + name_ + "': " + std::to_string(vocab_.size()) +
                           " words but " + std::to_string(values_.size()) + " values at dim " +
                           std::to_string(dim_));
    }
    require_finite(values_, "embedding table");
    index_.reserve(vocab_.size());
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
      if (!index_.emplace(vocab_[i], i).second) {
        throw DataError("duplicate word '" + vocab_[i] + "' in embedding table '" + name_ + "'");
      }
    }
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t size() const noexcept { return vocab_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * dim_, dim_);
  }

  std::optional<std::size_t> index_of(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(std::string_view word) const { return index_of(word).has_value(); }

  // Exact, case-sensitive match. nullopt means out of vocabulary.
  std::optional<std::span<const double>> lookup(std::string_view word) const {
    auto i = index_of(word);
    if (!i) return std::nullopt;
    return row(*i);
  }

  // Rows for the given words, in the given order. Every word must be present.
  EmbeddingTable subset(const std::vector<std::string>& words, std::string name = {}) const {
    std::vector<double> vals;
    vals.reserve(words.size() * dim_);
    for (const auto& w : words) {
      auto r = lookup(w);
      if (!r) throw DataError("subset: word '" + w + "' not in table '" + name_ + "'");
      vals.insert(vals.end(), r->begin(), r->end());
    }
    return EmbeddingTable(name.empty() ? name_ : std::move(name), words, std::move(vals), dim_);
  }

  // Rows as a V x d tensor without gradient.
  Tensor as_tensor() const { return Tensor::from({size(), dim_}, values_); }

  bool operator==(const EmbeddingTable& o) const {
    return vocab_ == o.vocab_ && values_ == o.values_ && dim_ == o.dim_;
  }

 private:
  std::string name_;
  std::vector<std::string> vocab_;
  std::vector<double> values_;
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EmbeddingLoadOptions {
  std::optional<std::size_t> expected_dim;
  // When set, rows for other words are skipped while reading.
  const std::unordered_set<std::string>* keep_only = nullptr;
  std::string name;
};

struct EmbeddingLoadResult {
  EmbeddingTable table;
  std::size_t duplicates = 0;  // later occurrences dropped; first wins
  bool had_header = false;
};

// Text vector format: optional "V d" header, then "word f1 ... fd" lines.
inline EmbeddingLoadResult read_embeddings(std::istream& in, const EmbeddingLoadOptions& opts = {}) {
  std::vector<std::string> vocab;
  std::vector<double> values;
  std::unordered_set<std::string> seen;
  std::optional<std::size_t> dim = opts.expected_dim;
  EmbeddingLoadResult result;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = text::split_ws(text::strip_cr(line));
    if (fields.empty()) continue;
    const std::string ctx = "embedding line " + std::to_string(lineno);
    if (lineno == 1 && fields.size() == 2) {
      std::size_t v = 0, d = 0;
      if (text::try_parse_size(fields[0], v) && text::try_parse_size(fields[1], d) && d > 0) {
        result.had_header = true;
        if (dim && *dim != d) {
          throw DimensionError("embedding header declares dim " + std::to_string(d) + ", expected " +
                               std::to_string(*dim));
        }
        dim = d;
        continue;
      }
    }
    const std::size_t row_dim = fields.size() - 1;
    if (row_dim == 0) throw DataError(ctx + ": word without vector");
    if (!dim) dim = row_dim;
    // Filtered-out rows are not validated further.
    if (opts.keep_only && !opts.keep_only->contains(std::string(fields[0]))) continue;
    if (row_dim != *dim) {
      if (opts.expected_dim) {
        throw DimensionError(ctx + ": vector dim " + std::to_string(row_dim) + " does not match expected dim " +
                             std::to_string(*opts.expected_dim));
      }
      throw DataError(ctx + ": ragged row with " + std::to_string(row_dim) + " values, expected " +
                      std::to_string(*dim));
    }
    std::string word(fields[0]);
    if (!seen.insert(word).second) {
      ++result.duplicates;
      continue;
    }
    vocab.push_back(std::move(word));
    for (std::size_t j = 1; j < fields.size(); ++j) values.push_back(text::parse_double(fields[j], ctx));
  }
  if (!dim) throw DataError("embedding file has no vectors");
  result.table = EmbeddingTable(opts.name, std::move(vocab), std::move(values), *dim);
  return result;
}

inline EmbeddingLoadResult load_embeddings(const std::filesystem::path& path, EmbeddingLoadOptions opts = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  if (opts.name.empty()) opts.name = path.stem().string();
  return read_embeddings(in, opts);
}

inline void write_embeddings(std::ostream& out, const EmbeddingTable& table, bool header = true) {
  if (header) out << table.size() << ' ' << table.dim() << '\n';
  std::string line;
  for (std::size_t i = 0; i < table.size(); ++i) {
    line = table.vocab()[i];
    for (double v : table.row(i)) {
      line.push_back(' ');
      text::append_double(line, v);
    }
    line.push_back('\n');
    out << line;
  }
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table, bool header = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding file " + path.string());
  write_embeddings(out, table, header);
  if (!out) throw DataError("write failed for " + path.string());
}

inline double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double norm(std::span<const double> u) { return std::sqrt(dot(u, u)); }

// u.v / (|u| |v|), clamped to [-1, 1].
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine of vectors with dims " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  }
  const double nu = norm(u), nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw UndefinedSimilarityError("cosine similarity of a zero vector is undefined");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

}  // namespace zsg

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "zsg/embedding.hpp"
#include "zsg/errors.hpp"

namespace zsg {

struct Neighbor {
  std::string word;
  double cosine = 0.0;

  bool operator==(const Neighbor&) const = default;
};

// Top-k rows by cosine to `query`, descending; ties go to the earlier vocab
// row. Zero rows have no defined cosine and are never returned.
inline std::vector<Neighbor> nearest_neighbors(const EmbeddingTable& table, const std::string& query, std::size_t k,
                                               bool exclude_self = true) {
  if (k == 0) throw ConfigError("nearest_neighbors: k must be at least 1");
  const auto qi = table.index_of(query);
  if (!qi) throw DataError("nearest_neighbors: query '" + query + "' not in table " + table.name());
  const auto q = table.row(*qi);
  const double qn = norm(q);
  if (qn == 0.0) throw UndefinedSimilarityError("nearest_neighbors: query '" + query + "' has a zero vector");

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (exclude_self && i == *qi) continue;
    const auto r = table.row(i);
    const double rn = norm(r);
    if (rn == 0.0) continue;
    scored.emplace_back(std::clamp(dot(q, r) / (qn * rn), -1.0, 1.0), i);
  }
  auto better = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
  std::vector<Neighbor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({table.vocab()[scored[i].second], scored[i].first});
  return out;
}

struct NeighborDiff {
  std::vector<Neighbor> only_a;
  std::vector<Neighbor> only_b;
};

// Words in one top-k list but not the other, in each list's own order.
inline NeighborDiff neighbor_diff(const EmbeddingTable& a, const EmbeddingTable& b, const std::string& query,
                                  std::size_t k) {
  const auto na = nearest_neighbors(a, query, k);
  const auto nb = nearest_neighbors(b, query, k);
  auto contains = [](const std::vector<Neighbor>& xs, const std::string& w) {
    return std::any_of(xs.begin(), xs.end(), [&](const Neighbor& n) { return n.word == w; });
  };
  NeighborDiff d;
  for (const auto& n : na)
    if (!contains(nb, n.word)) d.only_a.push_back(n);
  for (const auto& n : nb)
    if (!contains(na, n.word)) d.only_b.push_back(n);
  return d;
}

}  // namespace zsg

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "zsg/embedding.hpp"
#include "zsg/errors.hpp"
#include "zsg/eval/spearman.hpp"
#include "zsg/rng.hpp"
#include "zsg/textio.hpp"

namespace zsg {

struct ConcretenessRatings {
  std::vector<std::pair<std::string, double>> rows;
};

// "word<TAB>rating" lines; '#' lines are comments.
inline ConcretenessRatings read_ratings(std::istream& in) {
  ConcretenessRatings r;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto l = text::strip_cr(line);
    if (l.empty() || l.front() == '#') continue;
    const auto f = l.find('\t') != std::string_view::npos ? text::split(l, '\t') : text::split_ws(l);
    if (f.size() != 2) throw DataError("ratings line " + std::to_string(lineno) + ": expected word<TAB>rating");
    std::string word(f[0]);
    const double v = text::parse_double(f[1], "ratings line " + std::to_string(lineno));
    if (!std::isfinite(v)) throw DataError("ratings line " + std::to_string(lineno) + ": non-finite rating");
    if (!seen.insert(word).second) throw DataError("ratings: duplicate word '" + word + "'");
    r.rows.emplace_back(std::move(word), v);
  }
  return r;
}

inline ConcretenessRatings load_ratings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings " + path.string());
  return read_ratings(in);
}

inline constexpr double ridge_lambda_floor = 1e-6;

struct RidgeModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 0.0;
  bool floored = false;  // lambda was 0 and the system singular

  double predict(std::span<const double> x) const {
    double s = intercept;
    for (std::size_t j = 0; j < weights.size(); ++j) s += weights[j] * x[j];
    return s;
  }
};

// Closed-form ridge on centred data; the intercept is not penalised.
inline RidgeModel ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
  if (x.rows() != y.size()) throw DimensionError("ridge_fit: row count mismatch");
  if (x.rows() < 1) throw DataError("ridge_fit: no samples");
  if (lambda < 0.0 || !std::isfinite(lambda)) throw ConfigError("ridge lambda must be non-negative");
  const Eigen::RowVectorXd xm = x.colwise().mean();
  const double ym = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - xm;
  const Eigen::VectorXd yc = y.array() - ym;
  const Eigen::MatrixXd gram = xc.transpose() * xc;
  const Eigen::VectorXd rhs = xc.transpose() * yc;

  RidgeModel m;
  m.lambda = lambda;
  auto solve = [&](double lam, Eigen::VectorXd& w) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += lam;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) return false;
    const auto d = ldlt.vectorD().cwiseAbs();
    if (d.minCoeff() <= 1e-12 * std::max(1.0, d.maxCoeff())) return false;
    w = ldlt.solve(rhs);
    return w.allFinite();
  };
  Eigen::VectorXd w;
  if (!solve(lambda, w)) {
    if (lambda >= ridge_lambda_floor) throw NumericError("ridge_fit: singular system");
    m.lambda = ridge_lambda_floor;
    m.floored = true;
    if (!solve(m.lambda, w)) throw NumericError("ridge_fit: singular system after lambda floor");
  }
  m.weights.assign(w.data(), w.data() + w.size());
  m.intercept = ym - xm.dot(w);
  return m;
}

struct ConcretenessResult {
  double mean_rho = 0.0;
  std::vector<double> fold_rhos;
  std::vector<std::size_t> fold_sizes;
  std::size_t covered = 0;
  std::size_t skipped = 0;
  double lambda = 0.0;
  bool lambda_floored = false;
};

// Fold of each of n items: sorted position shuffled by seed, then round-robin.
inline std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(perm);
  std::vector<std::size_t> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold[perm[pos]] = pos % folds;
  return fold;
}

// k-fold ridge probe from embedding to rating; Spearman on each held-out
// fold, averaged. Words are sorted before the seeded shuffle so the input
// row order does not matter.
inline ConcretenessResult concreteness_cv(const EmbeddingTable& table, const ConcretenessRatings& ratings,
                                          std::size_t folds = 10, std::uint64_t seed = 0, double lambda = 1e-3) {
  if (folds < 2) throw ConfigError("concreteness_cv: need at least 2 folds");
  std::vector<std::pair<std::string, double>> rows;
  ConcretenessResult res;
  for (const auto& r : ratings.rows) {
    if (table.contains(r.first)) rows.push_back(r);
    else ++res.skipped;
  }
  std::sort(rows.begin(), rows.end());
  res.covered = rows.size();
  if (rows.size() < 2 * folds) {
    throw DataError("concreteness_cv: " + std::to_string(rows.size()) + " rated words in table, need at least " +
                    std::to_string(2 * folds) + " for " + std::to_string(folds) + " folds");
  }
  const auto fold = fold_assignment(rows.size(), folds, seed);
  const std::size_t d = table.dim();
  res.lambda = lambda;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < rows.size(); ++i) (fold[i] == f ? te : tr).push_back(i);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(tr.size()), static_cast<Eigen::Index>(d));
    Eigen::VectorXd y(static_cast<Eigen::Index>(tr.size()));
    for (std::size_t r = 0; r < tr.size(); ++r) {
      const auto v = table.row(*table.index_of(rows[tr[r]].first));
      for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = v[j];
      y(static_cast<Eigen::Index>(r)) = rows[tr[r]].second;
    }
    const RidgeModel m = ridge_fit(x, y, lambda);
    if (m.floored) {
      res.lambda_floored = true;
      res.lambda = m.lambda;
    }
    std::vector<double> pred, gold;
    for (std::size_t i : te) {
      pred.push_back(m.predict(table.row(*table.index_of(rows[i].first))));
      gold.push_back(rows[i].second);
    }
    res.fold_rhos.push_back(spearman(pred, gold));
    res.fold_sizes.push_back(te.size());
  }
  res.mean_rho = std::accumulate(res.fold_rhos.begin(), res.fold_rhos.end(), 0.0) / static_cast<double>(folds);
  return res;
}

}  // namespace zsg

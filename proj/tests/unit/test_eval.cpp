#include <gtest/gtest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "zsg/eval/concreteness.hpp"
#include "zsg/eval/neighbors.hpp"
#include "zsg/eval/similarity.hpp"
#include "zsg/eval/spearman.hpp"

using namespace zsg;

namespace {

EmbeddingTable random_table(std::size_t v, std::size_t d, unsigned seed) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < v; ++i) words.push_back("w" + std::to_string(i));
  return EmbeddingTable("rand", words, oracle::randn(v * d, seed), d);
}

EmbeddingTable scaled(const EmbeddingTable& t, double s) {
  std::vector<double> v(t.values().begin(), t.values().end());
  for (auto& x : v) x *= s;
  return EmbeddingTable(t.name(), t.vocab(), v, t.dim());
}

SimilarityBenchmark random_bench(const EmbeddingTable& t, std::size_t n, unsigned seed) {
  SimilarityBenchmark b;
  b.name = "toy";
  std::mt19937 g(seed);
  std::uniform_int_distribution<std::size_t> pick(0, t.size() - 1);
  std::uniform_real_distribution<double> gold(0, 10);
  for (std::size_t i = 0; i < n; ++i) b.rows.push_back({t.vocab()[pick(g)], t.vocab()[pick(g)], gold(g), {}});
  return b;
}

std::vector<std::string> words_of(const std::vector<Neighbor>& ns) {
  std::vector<std::string> out;
  for (const auto& n : ns) out.push_back(n.word);
  return out;
}

}  // namespace

TEST(Spearman, Examples) {
  const std::vector<double> x = {1, 2, 3};
  EXPECT_NEAR(spearman(x, std::vector<double>{3, 1, 2}), -0.5, 1e-15);
  EXPECT_NEAR(spearman(std::vector<double>{1, 1, 2}, x), 1.5 / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(spearman(x, std::vector<double>{10, 20, 1000}), 1.0, 1e-15);
}

TEST(Spearman, Errors) {
  const std::vector<double> x = {1, 2, 3};
  EXPECT_THROW(spearman(x, std::vector<double>{1, 2}), DimensionError);
  EXPECT_THROW(spearman(x, std::vector<double>{4, 4, 4}), UndefinedCorrelationError);
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1}), DimensionError);
}

TEST(Spearman, FractionalRanks) {
  const std::vector<double> x = {3, 1, 3, 2, 3};
  EXPECT_EQ(fractional_ranks(x), (std::vector<double>{4, 1, 4, 2, 4}));
  EXPECT_EQ(fractional_ranks(x), oracle::naive_ranks(x));
}

TEST(Spearman, MatchesBruteForceWithTies) {
  std::mt19937 g(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 3 + g() % 48;
    std::uniform_int_distribution<int> small(0, 6);  // coarse values force ties
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = small(g);
      b[i] = trial % 2 ? small(g) : std::normal_distribution<double>()(g);
    }
    if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; })) continue;
    if (std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; })) continue;
    EXPECT_NEAR(spearman(a, b), oracle::naive_spearman(a, b), 1e-12);
  }
}

TEST(Spearman, MonotoneInvariance) {
  for (unsigned s = 0; s < 30; ++s) {
    const auto a = oracle::randn(20, s), b = oracle::randn(20, s + 100);
    std::vector<double> fa, gb;
    for (double v : a) fa.push_back(std::exp(v) + 3);
    for (double v : b) gb.push_back(v * v * v);
    EXPECT_EQ(spearman(a, b), spearman(fa, gb));
  }
}

TEST(Benchmark, ReadFormatsAndTags) {
  std::istringstream in(
      "# tags: adj,noun,conc-q4\n"
      "old\tnew\t1.58\tadj\n"
      "smart\tintelligent\t9.2\tadj,conc-q4\n"
      "cup tea 4.5\n");
  auto b = read_benchmark(in, "sl");
  ASSERT_EQ(b.rows.size(), 3u);
  EXPECT_EQ(b.rows[1].tags, (std::vector<std::string>{"adj", "conc-q4"}));
  EXPECT_EQ(b.rows[2].word2, "tea");
  EXPECT_EQ(b.rows[2].gold, 4.5);
  std::istringstream bad("a\tb\n");
  EXPECT_THROW(read_benchmark(bad, "x"), DataError);
  std::istringstream undeclared("# tags: adj\na\tb\t1\tverb\n");
  EXPECT_THROW(read_benchmark(undeclared, "x"), DataError);
  std::istringstream side("cup\ttea\tnoun\nmissing\tpair\tadj\n");
  EXPECT_EQ(apply_tag_sidecar(b, side), 1u);
  EXPECT_EQ(b.rows[2].tags, (std::vector<std::string>{"noun"}));
}

TEST(EvalSimilarity, CoverageTwoOfThree) {
  std::istringstream in("a 1 0\nb 0.8 0.6\nc 0 1\n");
  const auto t = read_embeddings(in).table;
  SimilarityBenchmark b{"toy", {{"a", "b", 9, {}}, {"a", "c", 1, {}}, {"a", "zzz", 5, {}}}, {}};
  const auto r = eval_similarity(t, b);
  EXPECT_EQ(r.covered, 2u);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.total(), 3u);
  EXPECT_NEAR(r.rho, 1.0, 1e-15);
}

TEST(EvalSimilarity, InsufficientCoverage) {
  const auto t = random_table(4, 3, 1);
  SimilarityBenchmark b{"tiny", {{"w0", "w1", 1, {}}, {"w0", "nope", 2, {}}}, {}};
  try {
    eval_similarity(t, b);
    FAIL();
  } catch (const InsufficientCoverageError& e) {
    EXPECT_EQ(e.benchmark(), "tiny");
  }
}

TEST(EvalSimilarity, CosineEqualsGoldGivesOne) {
  const auto t = random_table(12, 4, 2);
  SimilarityBenchmark b{"exact", {}, {}};
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    b.rows.push_back({t.vocab()[i], t.vocab()[i + 1], cosine(t.row(i), t.row(i + 1)), {}});
  EXPECT_NEAR(eval_similarity(t, b).rho, 1.0, 1e-15);
}

TEST(EvalSimilarity, ScaleInvariant) {
  const auto t = random_table(30, 6, 3);
  const auto b = random_bench(t, 60, 4);
  const double rho = eval_similarity(t, b).rho;
  EXPECT_EQ(eval_similarity(scaled(t, 8.0), b).rho, rho);
  EXPECT_EQ(eval_similarity(scaled(t, 0.25), b).rho, rho);
  EXPECT_NEAR(eval_similarity(scaled(t, 3.7), b).rho, rho, 1e-12);
}

TEST(Subsets, AllRowsAndDisjoint) {
  const auto t = random_table(30, 6, 5);
  auto b = random_bench(t, 40, 6);
  for (std::size_t i = 0; i < b.rows.size(); ++i) b.rows[i].tags = {"all", i % 2 ? "odd" : "even"};
  const auto subs = eval_subsets(t, b);
  ASSERT_EQ(subs.size(), 3u);  // sorted: all, even, odd
  EXPECT_EQ(subs[0].tag, "all");
  EXPECT_EQ(*subs[0].rho, eval_similarity(t, b).rho);
  for (int parity = 0; parity < 2; ++parity) {
    SimilarityBenchmark part{"p", {}, {}};
    for (std::size_t i = parity; i < b.rows.size(); i += 2) part.rows.push_back(b.rows[i]);
    EXPECT_EQ(*subs[parity ? 2 : 1].rho, eval_similarity(t, part).rho);
  }
}

TEST(Subsets, NotEvaluableIsNullNotZero) {
  const auto t = random_table(5, 3, 7);
  SimilarityBenchmark b{"s",
                        {{"w0", "w1", 1, {"big"}}, {"w1", "w2", 2, {"big"}}, {"w2", "w3", 3, {"big", "one"}},
                         {"w0", "oov", 4, {"oov"}}, {"w1", "oov2", 5, {"oov"}}},
                        {}};
  const auto subs = eval_subsets(t, b, {"big", "one", "oov", "absent"});
  EXPECT_TRUE(subs[0].rho.has_value());
  EXPECT_FALSE(subs[1].rho.has_value());
  EXPECT_EQ(subs[1].rows, 1u);
  EXPECT_FALSE(subs[2].rho.has_value());
  EXPECT_EQ(subs[2].covered, 0u);
  EXPECT_FALSE(subs[3].rho.has_value());
  EXPECT_EQ(subs[3].rows, 0u);
}

TEST(Report, FormatsAndMean) {
  EXPECT_EQ(format_rho100(0.805), "80.5");
  EXPECT_EQ(format_rho100(0.40812), "40.8");
  EXPECT_EQ(format_rho100(-0.0004), "-0.0");
  EvalReport rep{"glove", {{"men", 0.8, 10, 0}, {"sl", 0.4, 8, 2}}, {}};
  EXPECT_NEAR(*rep.mean_rho(), 0.6, 1e-15);
  std::ostringstream js;
  write_report_jsonl(js, rep);
  std::istringstream lines(js.str());
  std::string line;
  std::getline(lines, line);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["benchmark"], "men");
  EXPECT_EQ(j["covered"], 10);
  EXPECT_EQ(j["rho100"], "80.0");
  std::ostringstream tab;
  write_report_table(tab, {rep});
  EXPECT_NE(tab.str().find("Mean"), std::string::npos);
  EXPECT_NE(tab.str().find("60.0"), std::string::npos);
  EXPECT_FALSE(EvalReport{}.mean_rho().has_value());
}

TEST(Neighbors, OneHotTieBreakIsVocabOrder) {
  const std::size_t n = 5;
  std::vector<double> eye(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
  const EmbeddingTable t("eye", {"e", "d", "c", "b", "a"}, eye, n);
  const auto nn = nearest_neighbors(t, "c", 4);
  EXPECT_EQ(words_of(nn), (std::vector<std::string>{"e", "d", "b", "a"}));
  for (const auto& x : nn) EXPECT_EQ(x.cosine, 0.0);
}

TEST(Neighbors, DuplicateRowFirst) {
  auto vals = oracle::randn(6 * 4, 8);
  std::copy(vals.begin() + 8, vals.begin() + 12, vals.begin() + 20);  // row 5 == row 2
  const EmbeddingTable t("dup", {"a", "b", "q", "c", "d", "twin"}, vals, 4);
  const auto nn = nearest_neighbors(t, "q", 2);
  EXPECT_EQ(nn[0].word, "twin");
  EXPECT_NEAR(nn[0].cosine, 1.0, 1e-15);
}

TEST(Neighbors, MatchesExhaustiveSort) {
  for (unsigned s = 0; s < 20; ++s) {
    const auto t = random_table(5, 3, 10 + s);
    std::vector<std::pair<double, std::string>> all;
    for (std::size_t i = 1; i < 5; ++i) all.push_back({-cosine(t.row(0), t.row(i)), t.vocab()[i]});
    std::sort(all.begin(), all.end());
    const auto nn = nearest_neighbors(t, "w0", 3);
    ASSERT_EQ(nn.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(nn[i].word, all[i].second);
      EXPECT_EQ(nn[i].cosine, -all[i].first);
    }
  }
}

TEST(Neighbors, FullListIsTotalOrder) {
  const auto t = random_table(40, 5, 30);
  const auto nn = nearest_neighbors(t, "w7", t.size() - 1);
  ASSERT_EQ(nn.size(), t.size() - 1);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < nn.size(); ++i) {
    EXPECT_NE(nn[i].word, "w7");
    EXPECT_TRUE(seen.insert(nn[i].word).second);
    EXPECT_EQ(nn[i].cosine, cosine(*t.lookup("w7"), *t.lookup(nn[i].word)));
    if (i) {
      EXPECT_GE(nn[i - 1].cosine, nn[i].cosine);
    }
  }
}

TEST(Neighbors, Errors) {
  const auto t = random_table(5, 3, 1);
  EXPECT_THROW(nearest_neighbors(t, "w0", 0), ConfigError);
  EXPECT_THROW(nearest_neighbors(t, "nope", 2), DataError);
  const EmbeddingTable z("z", {"zero", "x"}, {0, 0, 1, 0}, 2);
  EXPECT_THROW(nearest_neighbors(z, "zero", 1), UndefinedSimilarityError);
  EXPECT_EQ(nearest_neighbors(t, "w0", 50).size(), 4u);
}

TEST(NeighborDiff, IdenticalAndSymmetric) {
  const auto a = random_table(20, 4, 40), b = random_table(20, 4, 41);
  const auto same = neighbor_diff(a, a, "w3", 5);
  EXPECT_TRUE(same.only_a.empty());
  EXPECT_TRUE(same.only_b.empty());
  const auto ab = neighbor_diff(a, b, "w3", 5), ba = neighbor_diff(b, a, "w3", 5);
  EXPECT_EQ(words_of(ab.only_a), words_of(ba.only_b));
  EXPECT_EQ(words_of(ab.only_b), words_of(ba.only_a));
}

TEST(NeighborDiff, SynonymMovesIntoTopK) {
  // textual space: "car" far from query; grounded space: "car" next to it
  std::vector<std::string> words = {"auto", "car", "x1", "x2", "x3", "x4"};
  const std::vector<double> ta = {1, 0, 0, -1, 0, 0, 0.9, 0.1, 0, 0.8, 0.2, 0, 0.7, 0.3, 0, 0.6, 0.4, 0};
  auto tb = ta;
  tb[3] = 0.99;
  tb[4] = 0.01;
  const EmbeddingTable a("text", words, ta, 3), b("grounded", words, tb, 3);
  const auto d = neighbor_diff(a, b, "auto", 3);
  EXPECT_EQ(words_of(d.only_b), (std::vector<std::string>{"car"}));
  EXPECT_EQ(words_of(d.only_a), (std::vector<std::string>{"x3"}));
}

TEST(Ridge, RecoversLinearMap) {
  const auto v = oracle::randn(40 * 3, 12);
  Eigen::MatrixXd x(40, 3);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = v[3 * i + j];
  Eigen::VectorXd y = 2.0 * x.col(0) - x.col(2) + Eigen::VectorXd::Constant(40, 0.5);
  const auto m = ridge_fit(x, y, 1e-10);
  EXPECT_NEAR(m.weights[0], 2.0, 1e-6);
  EXPECT_NEAR(m.weights[1], 0.0, 1e-6);
  EXPECT_NEAR(m.weights[2], -1.0, 1e-6);
  EXPECT_NEAR(m.intercept, 0.5, 1e-6);
  EXPECT_FALSE(m.floored);
}

TEST(Ridge, SingularAtZeroIsFloored) {
  Eigen::MatrixXd x(4, 2);
  x << 1, 2, 2, 4, 3, 6, 4, 8;  // rank 1
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(4, 0, 3);
  const auto m = ridge_fit(x, y, 0.0);
  EXPECT_TRUE(m.floored);
  EXPECT_EQ(m.lambda, ridge_lambda_floor);
  for (double w : m.weights) EXPECT_TRUE(std::isfinite(w));
}

TEST(Concreteness, FoldPartition) {
  for (std::size_t n : {20u, 23u, 57u}) {
    const auto f = fold_assignment(n, 10, 3);
    std::vector<std::size_t> sizes(10, 0);
    for (std::size_t x : f) ++sizes.at(x);
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    EXPECT_LE(*hi - *lo, 1u);
    EXPECT_EQ(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}), n);
  }
}

TEST(Concreteness, LinearTargetHighRho) {
  const auto t = random_table(200, 8, 50);
  const auto w = oracle::randn(8, 51);
  ConcretenessRatings r;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double y = 1.0;
    for (std::size_t j = 0; j < 8; ++j) y += w[j] * t.row(i)[j];
    r.rows.push_back({t.vocab()[i], y});
  }
  const auto res = concreteness_cv(t, r);
  EXPECT_GT(res.mean_rho, 0.99);
  EXPECT_EQ(res.fold_rhos.size(), 10u);
  EXPECT_EQ(res.covered, 200u);
}

TEST(Concreteness, NoiseNearZero) {
  const auto t = random_table(500, 8, 0);
  const auto noise = oracle::randn(500, 999);
  ConcretenessRatings r;
  for (std::size_t i = 0; i < t.size(); ++i) r.rows.push_back({t.vocab()[i], noise[i]});
  EXPECT_LT(std::abs(concreteness_cv(t, r, 10, 0).mean_rho), 0.2);
}

TEST(Concreteness, RowOrderAndDeterminism) {
  const auto t = random_table(60, 4, 60);
  const auto y = oracle::randn(60, 61);
  ConcretenessRatings r;
  for (std::size_t i = 0; i < 60; ++i) r.rows.push_back({t.vocab()[i], y[i] + t.row(i)[0]});
  r.rows.push_back({"not_in_table", 1.0});
  const auto a = concreteness_cv(t, r, 5, 7);
  std::reverse(r.rows.begin(), r.rows.end());
  const auto b = concreteness_cv(t, r, 5, 7);
  EXPECT_EQ(a.fold_rhos, b.fold_rhos);
  EXPECT_EQ(a.mean_rho, b.mean_rho);
  EXPECT_EQ(a.skipped, 1u);
}

TEST(Concreteness, ZeroLambdaSingularFloors) {
  // rows live on a 2-D subspace of 4-D space, so X^T X is singular
  const auto base = oracle::randn(40 * 2, 70);
  std::vector<double> vals;
  std::vector<std::string> words;
  ConcretenessRatings r;
  for (std::size_t i = 0; i < 40; ++i) {
    const double a = base[2 * i], b = base[2 * i + 1];
    vals.insert(vals.end(), {a, b, a + b, a - b});
    words.push_back("w" + std::to_string(i));
    r.rows.push_back({words.back(), 3 * a - b});
  }
  const EmbeddingTable t("flat", words, vals, 4);
  const auto res = concreteness_cv(t, r, 4, 0, 0.0);
  EXPECT_TRUE(res.lambda_floored);
  EXPECT_EQ(res.lambda, ridge_lambda_floor);
  EXPECT_GT(res.mean_rho, 0.99);
}

TEST(Concreteness, Errors) {
  const auto t = random_table(15, 3, 80);
  ConcretenessRatings r;
  for (std::size_t i = 0; i < 15; ++i) r.rows.push_back({t.vocab()[i], static_cast<double>(i)});
  EXPECT_THROW(concreteness_cv(t, r, 10), DataError);  // 15 < 2 per fold
  EXPECT_THROW(concreteness_cv(t, r, 1), ConfigError);
  std::istringstream dup("a\t1\na\t2\n");
  EXPECT_THROW(read_ratings(dup), DataError);
  std::istringstream ok("# c\nstone\t4.9\nidea 1.6\n");
  EXPECT_EQ(read_ratings(ok).rows.size(), 2u);
}

TEST(EvalSimilarity, ZeroRowsSkippedLikeOov) {
  const EmbeddingTable t("z", {"a", "b", "c", "dead"}, {1, 0, 0.6, 0.8, 0, 1, 0, 0}, 2);
  SimilarityBenchmark b{"zero", {{"a", "b", 3, {"x"}}, {"a", "c", 1, {"x"}}, {"a", "dead", 2, {"x"}}}, {}};
  const auto r = eval_similarity(t, b);
  EXPECT_EQ(r.covered, 2u);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(eval_subsets(t, b)[0].covered, 2u);
}

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "zsg/embedding.hpp"
#include "zsg/errors.hpp"
#include "zsg/eval/spearman.hpp"
#include "zsg/textio.hpp"

namespace zsg {

struct BenchmarkRow {
  std::string word1;
  std::string word2;
  double gold = 0.0;
  std::vector<std::string> tags;
};

// Word-pair similarity benchmark.
struct SimilarityBenchmark {
  std::string name;
  std::vector<BenchmarkRow> rows;
  std::set<std::string> declared_tags;  // empty: any tag allowed

  void validate() const {
    if (rows.size() < 2) throw DataError("benchmark '" + name + "' needs at least 2 rows");
    for (const auto& r : rows) {
      if (!std::isfinite(r.gold)) throw DataError("benchmark '" + name + "': non-finite gold score");
      if (declared_tags.empty()) continue;
      for (const auto& t : r.tags) {
        if (!declared_tags.contains(t)) throw DataError("benchmark '" + name + "': undeclared tag '" + t + "'");
      }
    }
  }

  std::set<std::string> tags() const {
    std::set<std::string> out;
    for (const auto& r : rows) out.insert(r.tags.begin(), r.tags.end());
    return out;
  }
};

namespace detail {

inline std::vector<std::string> parse_tag_list(std::string_view field) {
  std::vector<std::string> tags;
  for (auto t : text::split(field, ',')) {
    while (!t.empty() && t.front() == ' ') t.remove_prefix(1);
    while (!t.empty() && t.back() == ' ') t.remove_suffix(1);
    if (!t.empty()) tags.emplace_back(t);
  }
  return tags;
}

}  // namespace detail

// "word1<TAB>word2<TAB>score[<TAB>tag1,tag2,...]"; '#' starts a comment
// line and "# tags: a,b,c" declares the tag set. Lines without a TAB are
// split on whitespace instead.
inline SimilarityBenchmark read_benchmark(std::istream& in, std::string name) {
  SimilarityBenchmark b;
  b.name = std::move(name);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto l = text::strip_cr(line);
    if (l.empty()) continue;
    if (l.front() == '#') {
      auto body = l.substr(1);
      while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
      if (body.starts_with("tags:")) {
        for (auto& t : detail::parse_tag_list(body.substr(5))) b.declared_tags.insert(t);
      }
      continue;
    }
    const auto f = l.find('\t') != std::string_view::npos ? text::split(l, '\t') : text::split_ws(l);
    if (f.size() < 3 || f.size() > 4) {
      throw DataError("benchmark '" + b.name + "' line " + std::to_string(lineno) +
                      ": expected word1, word2, score[, tags]");
    }
    BenchmarkRow r{std::string(f[0]), std::string(f[1]),
                   text::parse_double(f[2], "benchmark '" + b.name + "' line " + std::to_string(lineno)), {}};
    if (f.size() == 4) r.tags = detail::parse_tag_list(f[3]);
    b.rows.push_back(std::move(r));
  }
  b.validate();
  return b;
}

inline SimilarityBenchmark load_benchmark(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open benchmark " + path.string());
  return read_benchmark(in, path.stem().string());
}

// Sidecar "word1<TAB>word2<TAB>tag1,tag2" lines; tags are appended to the
// matching benchmark rows. Returns the number of rows that received tags.
inline std::size_t apply_tag_sidecar(SimilarityBenchmark& bench, std::istream& in) {
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> tags;
  std::string line;
  while (std::getline(in, line)) {
    const auto l = text::strip_cr(line);
    if (l.empty() || l.front() == '#') continue;
    const auto f = text::split(l, '\t');
    if (f.size() != 3) throw DataError("tag sidecar: expected word1<TAB>word2<TAB>tags");
    tags[{std::string(f[0]), std::string(f[1])}] = detail::parse_tag_list(f[2]);
  }
  std::size_t applied = 0;
  for (auto& r : bench.rows) {
    auto it = tags.find({r.word1, r.word2});
    if (it == tags.end()) continue;
    r.tags.insert(r.tags.end(), it->second.begin(), it->second.end());
    ++applied;
  }
  return applied;
}

struct SimilarityResult {
  std::string benchmark;
  double rho = 0.0;
  std::size_t covered = 0;
  std::size_t skipped = 0;

  std::size_t total() const { return covered + skipped; }
};

namespace detail {

// Zero rows have no cosine; they are treated like missing words.
inline bool is_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

inline bool scorable(const EmbeddingTable& table, const BenchmarkRow& r) {
  const auto a = table.lookup(r.word1);
  const auto b = table.lookup(r.word2);
  return a && b && !is_zero(*a) && !is_zero(*b);
}

inline SimilarityResult score_rows(const EmbeddingTable& table, const SimilarityBenchmark& bench,
                                   const std::vector<const BenchmarkRow*>& rows, const std::string& label) {
  std::vector<double> gold, model;
  SimilarityResult res;
  res.benchmark = label;
  for (const BenchmarkRow* r : rows) {
    const auto a = table.lookup(r->word1);
    const auto b = table.lookup(r->word2);
    if (!a || !b || is_zero(*a) || is_zero(*b)) {
      ++res.skipped;
      continue;
    }
    gold.push_back(r->gold);
    model.push_back(cosine(*a, *b));
    ++res.covered;
  }
  if (res.covered < 2) {
    throw InsufficientCoverageError(bench.name, "benchmark '" + label + "': only " + std::to_string(res.covered) +
                                                    " of " + std::to_string(rows.size()) + " pairs in vocabulary");
  }
  res.rho = spearman(model, gold);
  return res;
}

}  // namespace detail

// Cosine similarity vs gold scores over pairs with both words in the table;
// OOV pairs (and pairs with an all-zero row) are skipped and counted.
inline SimilarityResult eval_similarity(const EmbeddingTable& table, const SimilarityBenchmark& bench) {
  std::vector<const BenchmarkRow*> rows;
  for (const auto& r : bench.rows) rows.push_back(&r);
  return detail::score_rows(table, bench, rows, bench.name);
}

struct SubsetResult {
  std::string tag;
  std::optional<double> rho;  // nullopt: fewer than 2 covered rows (or undefined)
  std::size_t covered = 0;
  std::size_t rows = 0;
};

// Spearman restricted to the rows carrying each tag. An empty tag list means
// every tag present in the benchmark.
inline std::vector<SubsetResult> eval_subsets(const EmbeddingTable& table, const SimilarityBenchmark& bench,
                                              std::vector<std::string> tags = {}) {
  if (tags.empty()) {
    const auto all = bench.tags();
    tags.assign(all.begin(), all.end());
  }
  std::vector<SubsetResult> out;
  for (const auto& tag : tags) {
    std::vector<const BenchmarkRow*> rows;
    for (const auto& r : bench.rows) {
      if (std::find(r.tags.begin(), r.tags.end(), tag) != r.tags.end()) rows.push_back(&r);
    }
    SubsetResult s{tag, std::nullopt, 0, rows.size()};
    for (const BenchmarkRow* r : rows) s.covered += detail::scorable(table, *r) ? 1 : 0;
    try {
      s.rho = detail::score_rows(table, bench, rows, bench.name + ":" + tag).rho;
    } catch (const InsufficientCoverageError&) {
    } catch (const UndefinedCorrelationError&) {
    }
    out.push_back(std::move(s));
  }
  return out;
}

// rho x 100 rounded to one decimal.
inline std::string format_rho100(double rho) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", rho * 100.0);
  return buf;
}

struct EvalReport {
  std::string table;
  std::vector<SimilarityResult> benchmarks;
  std::map<std::string, std::vector<SubsetResult>> subsets;  // by benchmark name

  // Mean rho over the evaluated benchmarks; nullopt if none.
  std::optional<double> mean_rho() const {
    if (benchmarks.empty()) return std::nullopt;
    double s = 0.0;
    for (const auto& b : benchmarks) s += b.rho;
    return s / static_cast<double>(benchmarks.size());
  }
};

inline void write_report_jsonl(std::ostream& out, const EvalReport& report) {
  for (const auto& b : report.benchmarks) {
    nlohmann::ordered_json j;
    j["table"] = report.table;
    j["benchmark"] = b.benchmark;
    j["rho"] = b.rho;
    j["rho100"] = format_rho100(b.rho);
    j["covered"] = b.covered;
    j["skipped"] = b.skipped;
    j["total"] = b.total();
    out << j.dump() << '\n';
  }
  for (const auto& [bench, subs] : report.subsets) {
    for (const auto& s : subs) {
      nlohmann::ordered_json j;
      j["table"] = report.table;
      j["benchmark"] = bench;
      j["subset"] = s.tag;
      if (s.rho) {
        j["rho"] = *s.rho;
        j["rho100"] = format_rho100(*s.rho);
      } else {
        j["rho"] = nullptr;
        j["rho100"] = "n/a";
      }
      j["covered"] = s.covered;
      j["rows"] = s.rows;
      out << j.dump() << '\n';
    }
  }
  if (auto m = report.mean_rho()) {
    nlohmann::ordered_json j;
    j["table"] = report.table;
    j["benchmark"] = "mean";
    j["rho"] = *m;
    j["rho100"] = format_rho100(*m);
    j["benchmarks"] = report.benchmarks.size();
    out << j.dump() << '\n';
  }
}

// One row per table, one column per benchmark plus Mean (rho x 100).
inline void write_report_table(std::ostream& out, const std::vector<EvalReport>& reports) {
  if (reports.empty()) return;
  std::vector<std::string> cols;
  for (const auto& r : reports)
    for (const auto& b : r.benchmarks)
      if (std::find(cols.begin(), cols.end(), b.benchmark) == cols.end()) cols.push_back(b.benchmark);
  std::size_t name_w = 5;
  for (const auto& r : reports) name_w = std::max(name_w, r.table.size());
  auto pad = [](const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; };
  out << std::string("Model") + std::string(name_w - 5, ' ');
  for (const auto& c : cols) out << "  " << pad(c, std::max<std::size_t>(c.size(), 6));
  out << "  " << pad("Mean", 6) << '\n';
  for (const auto& r : reports) {
    out << r.table << std::string(name_w - r.table.size(), ' ');
    for (const auto& c : cols) {
      std::string cell = "-";
      for (const auto& b : r.benchmarks)
        if (b.benchmark == c) cell = format_rho100(b.rho);
      out << "  " << pad(cell, std::max<std::size_t>(c.size(), 6));
    }
    const auto m = r.mean_rho();
    out << "  " << pad(m ? format_rho100(*m) : "-", 6) << '\n';
  }
  for (const auto& r : reports) {
    for (const auto& [bench, subs] : r.subsets) {
      out << '\n' << r.table << " / " << bench << " subsets\n";
      for (const auto& s : subs) {
        out << "  " << s.tag << ": " << (s.rho ? format_rho100(*s.rho) : std::string("n/a")) << "  (" << s.covered
            << "/" << s.rows << " pairs)\n";
      }
    }
  }
}

}  // namespace zsg

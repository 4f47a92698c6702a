#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zsg/alignment.hpp"
#include "zsg/dataset.hpp"
#include "zsg/embedding.hpp"
#include "zsg/errors.hpp"
#include "zsg/eval/concreteness.hpp"
#include "zsg/eval/neighbors.hpp"
#include "zsg/eval/similarity.hpp"
#include "zsg/model.hpp"
#include "zsg/model_check.hpp"
#include "zsg/pca.hpp"
#include "zsg/textio.hpp"
#include "zsg/trainer.hpp"

namespace zsg::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  exit_ok = 0,
  exit_check_failed = 1,
  exit_config = 2,
  exit_data = 3,
  exit_numeric = 4,
  exit_coverage = 5,
};

inline const char* alignment_names[] = {"linear:1", "relu:1", "lrelu:1", "lrelu:2"};
inline const char* encoder_names[] = {"wl", "bow", "gru", "lstm", "te:1", "te:2", "te:3"};

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

struct TrainOptions {
  std::string captions, images, embeddings, pca;
  std::string encoder = "lstm";
  std::string align = "linear:1";
  double alpha = 0.01;
  std::size_t grounded_dim = 1024;
  std::size_t hidden = 2048;
  std::size_t heads = 16;
  bool no_positional = false;
  std::size_t batch_size = 256;
  double lr = 0.001;
  std::size_t epochs = 20;
  std::size_t patience = 5;
  std::size_t vocab_size = 10000;
  double val_ratio = 0.0;
  bool timing = false;
};

struct GroundOptions {
  std::string checkpoint, embeddings, out;
};

struct EvalOptions {
  std::vector<std::string> tables;
  std::string bench_dir;
  std::vector<std::string> bench_files;
  bool subsets = false;
};

struct NeighborOptions {
  std::string table_a, table_b;
  std::vector<std::string> queries;
  std::size_t k = 10;
};

struct ConcOptions {
  std::string table, ratings;
  std::size_t folds = 10;
  double lambda = 1e-3;
};

struct GradcheckOptions {
  std::string encoder = "lstm";
  std::string align = "linear:1";
  bool all = false;
  bool corrupt_adjoint = false;
  ToyDims dims;
};

namespace detail {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
}

inline std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

inline void write_snapshot(const CLI::App& app, const CLI::App* sub, const std::string& dir) {
  ensure_dir(dir);
  auto out = open_out(fs::path(dir) / (sub->get_name() + ".config.ini"));
  // Globals plus the active command; blocks of other commands are dropped.
  std::istringstream in(app.config_to_str(true, true));
  std::vector<std::string> kept;
  std::string line, block;
  bool foreign = false;
  auto flush = [&] {
    if (!block.empty() && !foreign) kept.push_back(block);
    block.clear();
    foreign = false;
  };
  while (std::getline(in, line)) {
    if (line.empty()) {
      flush();
      continue;
    }
    const auto dot = line.find('.');
    if (line.front() != '#' && dot < line.find('=') && line.substr(0, dot) != sub->get_name()) foreign = true;
    block += line + '\n';
  }
  flush();
  for (std::size_t i = 0; i < kept.size(); ++i) out << (i ? "\n" : "") << kept[i];
}

inline std::unordered_set<std::string> benchmark_words(const std::vector<SimilarityBenchmark>& benches) {
  std::unordered_set<std::string> w;
  for (const auto& b : benches)
    for (const auto& r : b.rows) {
      w.insert(r.word1);
      w.insert(r.word2);
    }
  return w;
}

inline std::vector<fs::path> list_benchmarks(const EvalOptions& o) {
  std::vector<fs::path> files(o.bench_files.begin(), o.bench_files.end());
  if (!o.bench_dir.empty()) {
    if (!fs::is_directory(o.bench_dir)) throw DataError("benchmark directory not found: " + o.bench_dir);
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(o.bench_dir)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".txt" || ext == ".tsv")) found.push_back(e.path());
    }
    std::sort(found.begin(), found.end());
    files.insert(files.end(), found.begin(), found.end());
  }
  if (files.empty()) throw ConfigError("eval: no benchmark files given (--benchmarks or --bench)");
  return files;
}

}  // namespace detail

inline int cmd_train(const GlobalOptions& g, const TrainOptions& o, std::ostream& out) {
  ModelConfig mc;
  mc.alignment = parse_alignment(o.align, o.alpha);
  mc.encoder = parse_encoder(o.encoder);
  mc.encoder.hidden = o.hidden;
  mc.encoder.heads = o.heads;
  mc.encoder.positional = !o.no_positional;
  mc.grounded_dim = o.grounded_dim;
  mc.seed = g.seed;
  TrainConfig tc;
  tc.batch_size = o.batch_size;
  tc.lr = o.lr;
  tc.epochs = o.epochs;
  tc.patience = o.patience;
  tc.vocab_top_k = o.vocab_size;
  tc.seed = g.seed;
  tc.validate();

  DatasetOptions dopts;
  dopts.vocab_top_k = o.vocab_size;
  dopts.val_ratio = o.val_ratio;
  const GroundingDataset ds = load_dataset(o.captions, o.images, dopts);
  const std::unordered_set<std::string> words(ds.vocab.begin(), ds.vocab.end());
  EmbeddingLoadOptions eopts;
  eopts.keep_only = &words;
  const EmbeddingTable source = load_embeddings(o.embeddings, eopts).table;
  mc.text_dim = source.dim();
  mc.image_dim = ds.image_dim();

  detail::ensure_dir(g.out_dir);
  const fs::path dir(g.out_dir);
  auto history = detail::open_out(dir / "history.jsonl");
  auto on_epoch = [&](const EpochRecord& r) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["train_mse"] = r.train_mse;
    if (std::isnan(r.val_mse)) j["val_mse"] = nullptr;
    else j["val_mse"] = r.val_mse;
    j["seconds"] = o.timing ? r.seconds : 0.0;
    history << j.dump() << '\n' << std::flush;
    out << "epoch " << r.epoch << " train_mse " << text::format_double(r.train_mse);
    if (!std::isnan(r.val_mse)) out << " val_mse " << text::format_double(r.val_mse);
    out << '\n';
  };

  try {
    std::optional<TrainResult> result;
    if (mc.encoder.kind == EncoderKind::wl) {
      std::optional<PcaProjection> pca;
      if (!o.pca.empty()) pca = load_pca(o.pca);
      auto wl = train_wl(mc, tc, ds, source, default_stopwords(), pca, on_epoch);
      save_pca(dir / "pca.txt", wl.pca);
      out << "word-level samples " << wl.samples << ", captions without content words " << wl.dropped_captions << '\n';
      result.emplace(std::move(wl.trained));
    } else {
      result.emplace(train(mc, tc, ds, source, on_epoch));
    }
    save_checkpoint(dir / "model.ckpt", result->model);
    out << "best epoch " << result->best_epoch << (result->stopped_early ? " (stopped early)" : "") << '\n';
    out << "checkpoint " << (dir / "model.ckpt").string() << '\n';
  } catch (const DivergenceError& e) {
    save_checkpoint(dir / "model.last_good.ckpt", e.last_good_model());
    throw;
  }
  return exit_ok;
}

inline int cmd_ground(const GlobalOptions& g, const GroundOptions& o, std::ostream& out) {
  const GroundingModel model = load_checkpoint(o.checkpoint);
  const EmbeddingTable source = load_embeddings(o.embeddings).table;
  if (source.dim() != model.config().text_dim) {
    throw DimensionError("embedding dim " + std::to_string(source.dim()) + " does not match checkpoint text dim " +
                         std::to_string(model.config().text_dim));
  }
  const auto space = ground_vocabulary(model.alignment(), source, o.checkpoint, model.config_hash());
  const fs::path path = o.out.empty() ? fs::path(g.out_dir) / "grounded.txt" : fs::path(o.out);
  if (path.has_parent_path()) detail::ensure_dir(path.parent_path().string());
  save_embeddings(path, space.table);
  out << "grounded " << space.table.size() << " words to dim " << space.table.dim() << ": " << path.string() << '\n';
  return exit_ok;
}

inline int cmd_eval(const GlobalOptions& g, const EvalOptions& o, std::ostream& out) {
  std::vector<SimilarityBenchmark> benches;
  for (const auto& f : detail::list_benchmarks(o)) {
    benches.push_back(load_benchmark(f));
    fs::path sidecar = f;
    sidecar.replace_extension(".tags");
    if (fs::exists(sidecar)) {
      std::ifstream in(sidecar);
      apply_tag_sidecar(benches.back(), in);
    }
  }
  const auto words = detail::benchmark_words(benches);
  std::vector<EvalReport> reports;
  for (const auto& t : o.tables) {
    EmbeddingLoadOptions eopts;
    eopts.keep_only = &words;
    const EmbeddingTable table = load_embeddings(t, eopts).table;
    EvalReport rep;
    rep.table = table.name();
    for (const auto& b : benches) {
      rep.benchmarks.push_back(eval_similarity(table, b));
      if (o.subsets && !b.tags().empty()) rep.subsets[b.name] = eval_subsets(table, b);
    }
    reports.push_back(std::move(rep));
  }
  detail::ensure_dir(g.out_dir);
  auto jsonl = detail::open_out(fs::path(g.out_dir) / "eval.jsonl");
  for (const auto& r : reports) write_report_jsonl(jsonl, r);
  std::ostringstream table;
  write_report_table(table, reports);
  for (const auto& r : reports)
    for (const auto& b : r.benchmarks)
      table << r.table << " / " << b.benchmark << ": " << b.covered << "/" << b.total() << " pairs covered\n";
  detail::open_out(fs::path(g.out_dir) / "eval.txt") << table.str();
  out << table.str();
  return exit_ok;
}

inline int cmd_neighbors(const GlobalOptions& g, const NeighborOptions& o, std::ostream& out) {
  if (o.queries.empty()) throw ConfigError("neighbors: at least one --query is required");
  const EmbeddingTable a = load_embeddings(o.table_a).table;
  std::optional<EmbeddingTable> b;
  if (!o.table_b.empty()) b = load_embeddings(o.table_b).table;
  std::ostringstream os;
  auto print = [&](const std::string& label, const std::vector<Neighbor>& ns) {
    os << "  " << label << ":";
    for (const auto& n : ns) os << ' ' << n.word << '(' << text::format_double(std::round(n.cosine * 1e4) / 1e4) << ')';
    os << '\n';
  };
  for (const auto& q : o.queries) {
    os << q << '\n';
    print(a.name(), nearest_neighbors(a, q, o.k));
    if (b) {
      print(b->name(), nearest_neighbors(*b, q, o.k));
      const auto d = neighbor_diff(a, *b, q, o.k);
      print("only " + a.name(), d.only_a);
      print("only " + b->name(), d.only_b);
    }
  }
  detail::ensure_dir(g.out_dir);
  detail::open_out(fs::path(g.out_dir) / "neighbors.txt") << os.str();
  out << os.str();
  return exit_ok;
}

inline int cmd_conc(const GlobalOptions& g, const ConcOptions& o, std::ostream& out) {
  const ConcretenessRatings ratings = load_ratings(o.ratings);
  std::unordered_set<std::string> words;
  for (const auto& r : ratings.rows) words.insert(r.first);
  EmbeddingLoadOptions eopts;
  eopts.keep_only = &words;
  const EmbeddingTable table = load_embeddings(o.table, eopts).table;
  const auto res = concreteness_cv(table, ratings, o.folds, g.seed, o.lambda);
  nlohmann::ordered_json j;
  j["table"] = table.name();
  j["folds"] = o.folds;
  j["seed"] = g.seed;
  j["lambda"] = res.lambda;
  j["lambda_floored"] = res.lambda_floored;
  j["covered"] = res.covered;
  j["skipped"] = res.skipped;
  j["fold_rho"] = res.fold_rhos;
  j["mean_rho"] = res.mean_rho;
  j["mean_rho100"] = format_rho100(res.mean_rho);
  detail::ensure_dir(g.out_dir);
  detail::open_out(fs::path(g.out_dir) / "conc.jsonl") << j.dump() << '\n';
  if (res.lambda_floored) out << "notice: singular system at lambda 0, used lambda " << res.lambda << '\n';
  out << table.name() << ": mean " << o.folds << "-fold rho x100 = " << format_rho100(res.mean_rho) << " ("
      << res.covered << " words, " << res.skipped << " not in table)\n";
  return exit_ok;
}

inline int cmd_gradcheck(const GlobalOptions& g, const GradcheckOptions& o, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> runs;
  if (o.all) {
    for (const char* e : {"wl", "bow", "gru", "lstm", "te:1"})
      for (const char* a : alignment_names) runs.emplace_back(e, a);
  } else {
    runs.emplace_back(o.encoder, o.align);
  }
  bool ok = true;
  for (const auto& [e, a] : runs) {
    const ModelConfig mc = toy_model_config(parse_encoder(e), parse_alignment(a), g.seed, o.dims);
    const auto r = check_model_gradients(mc, g.seed, o.corrupt_adjoint);
    const bool pass = r.max_rel_error < 1e-4;
    ok = ok && pass;
    out << "gradcheck " << e << ' ' << a << " max_rel_err " << text::format_double(r.max_rel_error) << ' '
        << (pass ? "PASS" : "FAIL");
    if (!pass) out << " worst " << r.worst_param << '[' << r.worst_index << ']';
    out << '\n';
  }
  return ok ? exit_ok : exit_check_failed;
}

// Entry point; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Zero-shot visual grounding of word embeddings", "zsg"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.allow_config_extras(false);

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.set_config("--config", "", "INI config file; one [section] per command, flags override it");

  TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train M and a sentence encoder on caption/image pairs");
  train->add_option("--captions", tr.captions, "Captions file: image_id<TAB>caption[<TAB>train|val]")->required();
  train->add_option("--images", tr.images, "Image vectors file: 'N dim' header, then id v1 ... vdim")->required();
  train->add_option("--embeddings", tr.embeddings, "Pretrained word vectors (text format)")->required();
  train->add_option("--encoder", tr.encoder, "wl | bow | gru | lstm | te:N");
  train->add_option("--align", tr.align, "linear:1 | relu:1 | lrelu:1 | lrelu:2 (any act:layers)");
  train->add_option("--alpha", tr.alpha, "Leaky ReLU slope");
  train->add_option("--grounded-dim", tr.grounded_dim, "Grounded dimension c");
  train->add_option("--hidden", tr.hidden, "Encoder state / hidden / feed-forward width");
  train->add_option("--heads", tr.heads, "Attention heads (te)");
  train->add_flag("--no-positional", tr.no_positional, "Disable positional encodings (te)");
  train->add_option("--batch-size", tr.batch_size, "Batch size");
  train->add_option("--lr", tr.lr, "NAdam learning rate");
  train->add_option("--epochs", tr.epochs, "Maximum epochs");
  train->add_option("--patience", tr.patience, "Early-stopping patience");
  train->add_option("--vocab-size", tr.vocab_size, "Caption vocabulary size (most frequent words)");
  train->add_option("--val-ratio", tr.val_ratio, "Validation share of images when captions carry no split");
  train->add_option("--pca", tr.pca, "Precomputed PCA projection for wl targets");
  train->add_flag("--timing", tr.timing, "Record wall-clock seconds in history.jsonl");

  GroundOptions gr;
  auto* ground = app.add_subcommand("ground", "Apply a trained M to every word of an embedding file");
  ground->add_option("--checkpoint", gr.checkpoint, "Checkpoint from train")->required();
  ground->add_option("--embeddings", gr.embeddings, "Source word vectors")->required();
  ground->add_option("--out", gr.out, "Output path (default <out-dir>/grounded.txt)");

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "Spearman rho on word-similarity benchmarks");
  eval->add_option("--table", ev.tables, "Embedding file(s) to evaluate")->required();
  eval->add_option("--benchmarks", ev.bench_dir, "Directory of *.txt / *.tsv benchmark files");
  eval->add_option("--bench", ev.bench_files, "Individual benchmark file(s)");
  eval->add_flag("--subsets", ev.subsets, "Also report per-tag subsets (tags column or <name>.tags sidecar)");

  NeighborOptions nb;
  auto* neighbors = app.add_subcommand("neighbors", "Nearest neighbours, and the diff between two tables");
  neighbors->add_option("--table", nb.table_a, "Embedding file")->required();
  neighbors->add_option("--table-b", nb.table_b, "Second embedding file for diff mode");
  neighbors->add_option("--query", nb.queries, "Query word(s)")->required();
  neighbors->add_option("-k,--k", nb.k, "Neighbours per query");

  ConcOptions cc;
  auto* conc = app.add_subcommand("conc", "Concreteness ridge probe with k-fold cross validation");
  conc->add_option("--table", cc.table, "Embedding file")->required();
  conc->add_option("--ratings", cc.ratings, "Ratings file: word<TAB>rating")->required();
  conc->add_option("--folds", cc.folds, "Cross-validation folds");
  conc->add_option("--lambda", cc.lambda, "Ridge penalty");

  GradcheckOptions gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check at toy size");
  gradcheck->add_option("--encoder", gc.encoder, "wl | bow | gru | lstm | te:N");
  gradcheck->add_option("--align", gc.align, "Alignment config");
  gradcheck->add_flag("--all", gc.all, "Every encoder (te:1) x every alignment config");
  gradcheck->add_option("--text-dim", gc.dims.text_dim, "Toy text dim d");
  gradcheck->add_option("--grounded-dim", gc.dims.grounded_dim, "Toy grounded dim c");
  gradcheck->add_option("--hidden", gc.dims.hidden, "Toy hidden width");
  gradcheck->add_option("--image-dim", gc.dims.image_dim, "Toy image dim");
  gradcheck->add_option("--heads", gc.dims.heads, "Toy attention heads");
  gradcheck->add_flag("--corrupt-adjoint", gc.corrupt_adjoint, "Debug: perturb the matmul adjoint");

  for (auto* sub : app.get_subcommands({})) sub->allow_config_extras(false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_config;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    int code = exit_ok;
    if (sub != gradcheck) detail::write_snapshot(app, sub, g.out_dir);
    if (sub == train) code = cmd_train(g, tr, out);
    else if (sub == ground) code = cmd_ground(g, gr, out);
    else if (sub == eval) code = cmd_eval(g, ev, out);
    else if (sub == neighbors) code = cmd_neighbors(g, nb, out);
    else if (sub == conc) code = cmd_conc(g, cc, out);
    else code = cmd_gradcheck(g, gc, out);
    return code;
  } catch (const InsufficientCoverageError& e) {
    err << "error: insufficient coverage on benchmark '" << e.benchmark() << "': " << e.what() << '\n';
    return exit_coverage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return exit_config;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return exit_data;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return exit_numeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_config;
  }
}

}  // namespace zsg::cli

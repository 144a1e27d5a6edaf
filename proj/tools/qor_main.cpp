// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// qor: generate corpora, train and benchmark QoR prediction models, run
// predictions and the gradient-check suite.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qor/datagen.hpp"
#include "qor/gradcheck.hpp"
#include "qor/model.hpp"

namespace {

using namespace qor;

uint64_t default_seed() {
  if (const char* env = std::getenv("QOR_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("QOR_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

// %.17g round-trips doubles exactly, keeping report files bit-reproducible.
std::string full_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ConfigFlags {
  std::optional<std::string> config_path;
  std::optional<std::string> seq_extractor, graph_extractor;
  std::optional<double> lr, dropout;
  std::optional<int64_t> batch, epochs;
  std::optional<uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (flat key=value)");
    cmd->add_option("--seq-extractor", seq_extractor, "transformer|lstm|cnn");
    cmd->add_option("--graph-extractor", graph_extractor, "gcn|gat|sage");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--batch", batch, "batch size");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--dropout", dropout, "dropout probability");
    cmd->add_option("--seed", seed, "run seed (default: QOR_SEED or 0)");
  }

  RunConfig resolve() const {
    RunConfig cfg = config_path ? RunConfig::from_file(*config_path) : RunConfig{};
    if (!config_path) cfg.seed = default_seed();
    if (seq_extractor) cfg.seq_extractor = seq_kind_from_string(*seq_extractor);
    if (graph_extractor) cfg.graph_extractor = gnn_kind_from_string(*graph_extractor);
    if (lr) cfg.lr = *lr;
    if (batch) cfg.batch = *batch;
    if (epochs) cfg.epochs = *epochs;
    if (dropout) cfg.dropout = *dropout;
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

void write_history(const std::filesystem::path& path,
                   const std::vector<EpochStats>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write history file " + path.string());
  for (const auto& st : history)
    out << st.epoch << "," << full_double(st.train_loss) << ","
        << full_double(st.train_mae) << "," << full_double(st.val_mae) << "\n";
}

void write_manifest(const std::filesystem::path& path, const RunConfig& cfg,
                    const std::filesystem::path& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest file " + path.string());
  out << "corpus=" << corpus.string() << "\n";
  out << "corpus_checksum=" << hex64(fnv1a64_file(corpus)) << "\n";
  out << "config_fingerprint=" << hex64(cfg.fingerprint()) << "\n";
  out << cfg.canonical_text();
}

void write_predictions(const std::filesystem::path& path, const Dataset& data,
                       const EvalResult& eval) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write predictions file " + path.string());
  out << "index,circuit_id,y_raw,yhat_raw,y_norm,yhat_norm\n";
  for (const auto& p : eval.predictions)
    out << p.index << "," << data.records[p.index].circuit_id << ","
        << full_double(p.y_raw) << "," << full_double(p.yhat_raw) << ","
        << full_double(p.y_norm) << "," << full_double(p.yhat_norm) << "\n";
}

int cmd_gen(const SynthSpec& spec, const std::string& out_dir) {
  const auto corpus = gen_corpus(spec, out_dir);
  std::cout << "wrote " << corpus.string() << " (" << spec.circuits << " circuits x "
            << spec.sequences << " sequences = " << spec.circuits * spec.sequences
            << " records)\n";
  return 0;
}

int cmd_train(const ConfigFlags& flags, const std::string& corpus_path,
              const std::string& out_dir) {
  const RunConfig cfg = flags.resolve();
  std::filesystem::create_directories(out_dir);
  const Dataset data = load_dataset(corpus_path);
  const DatasetSplit split = split_dataset(data, cfg.seed);

  JointModel model(cfg);
  const TrainResult result = train_model(model, data, split);

  const std::filesystem::path dir(out_dir);
  write_history(dir / "history.csv", result.history);
  write_manifest(dir / "manifest.txt", cfg, corpus_path);
  save_bundle(model, dir / "bundle.qorf");
  if (!split.val.empty())
    write_predictions(dir / "val_predictions.csv", data,
                      evaluate_model(model, data, split.val, cfg.batch));

  const auto& last = result.history.back();
  std::cout << "trained " << to_string(cfg.seq_extractor) << "+"
            << to_string(cfg.graph_extractor) << ": " << result.history.size()
            << " epochs, best epoch " << result.best_epoch << ", final val MAE "
            << last.val_mae << " (normalized)\n"
            << "artifacts in " << dir.string() << "\n";
  return 0;
}

int cmd_bench(const ConfigFlags& flags, const std::string& corpus_path,
              const std::string& out_dir, int n_seeds) {
  const RunConfig base = flags.resolve();
  std::filesystem::create_directories(out_dir);
  const Dataset data = load_dataset(corpus_path);

  auto cells = run_bench(data, base, n_seeds, [](const BenchCell& cell) {
    std::cout << to_string(cell.seq) << "+" << to_string(cell.gnn) << ": "
              << (cell.failed ? "FAILED (" + cell.error + ")"
                              : "MAE " + std::to_string(cell.mean_mae))
              << " [" << cell.seconds << "s]\n";
  });

  const std::filesystem::path dir(out_dir);
  const std::string table = format_bench_table(cells, n_seeds);
  {
    std::ofstream out(dir / "bench_results.txt", std::ios::binary);
    out << table;
  }
  {
    std::ofstream out(dir / "bench_cells.csv", std::ios::binary);
    out << "seq,gnn,runs,mean_mae,std_mae,seconds,status\n";
    for (const auto& c : cells)
      out << to_string(c.seq) << "," << to_string(c.gnn) << "," << c.maes.size()
          << "," << full_double(c.mean_mae) << "," << full_double(c.std_mae)
          << "," << full_double(c.seconds) << ","
          << (c.failed ? "failed" : "ok") << "\n";
  }
  std::cout << "\n" << table << "bench report in " << dir.string() << "\n";
  for (const auto& c : cells)
    if (c.failed) return 1;
  return 0;
}

int cmd_predict(const std::string& bundle_path, const std::string& graph_path,
                const std::string& seq_text) {
  JointModel model = load_bundle(bundle_path);
  const AigGraph g = load_graph(graph_path);
  std::vector<int64_t> seq;
  try {
    seq = parse_sequence_string(seq_text);
  } catch (const ValueError& e) {
    throw ConfigError(e.what());
  }
  if (static_cast<int64_t>(seq.size()) != model.seq_len())
    throw ConfigError("sequence has " + std::to_string(seq.size()) +
                      " transformations, model expects " +
                      std::to_string(model.seq_len()));
  const double norm = model.predict_normalized(g, seq);
  const double nodes = model.label_std * norm + model.label_mean;
  std::printf("predicted_nodes=%.6f normalized=%.6f\n", nodes, norm);
  return 0;
}

int cmd_gradcheck(uint64_t seed, double tol, const std::string& flip_op) {
  if (!flip_op.empty()) set_backward_sign_flip(flip_op);
  const GradCheckReport report = run_gradient_checks(seed, tol);
  set_backward_sign_flip("");
  std::cout << format_report(report);
  return report.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QoR prediction toolkit for logic-synthesis optimization sequences"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  SynthSpec spec;
  std::string gen_out;
  bool gen_seed_given = false;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--circuits", spec.circuits, "number of circuits");
  gen->add_option("--seqs", spec.sequences, "sequences per circuit");
  gen->add_option("--nodes-min", spec.nodes_min, "smallest circuit size");
  gen->add_option("--nodes-max", spec.nodes_max, "largest circuit size");
  gen->add_option("--len", spec.seq_len, "sequence length");
  gen->add_option("--noise", spec.noise, "label noise amplitude");
  gen->add_option("--seed", spec.seed, "generator seed (default: QOR_SEED or 0)")
      ->each([&](const std::string&) { gen_seed_given = true; });

  // train
  auto* train = app.add_subcommand("train", "train one extractor pairing");
  ConfigFlags train_flags;
  std::string train_corpus, train_out = ".";
  train->add_option("--corpus", train_corpus, "corpus file")->required();
  train->add_option("--out", train_out, "output directory");
  train_flags.attach(train);

  // bench
  auto* bench = app.add_subcommand("bench", "train all nine extractor pairs");
  ConfigFlags bench_flags;
  std::string bench_corpus, bench_out = ".";
  int bench_seeds = 3;
  bench->add_option("--corpus", bench_corpus, "corpus file")->required();
  bench->add_option("--out", bench_out, "output directory");
  bench->add_option("--seeds", bench_seeds, "seeds per cell")
      ->check(CLI::PositiveNumber);
  bench_flags.attach(bench);

  // predict
  auto* predict = app.add_subcommand("predict", "predict QoR for one pair");
  std::string pr_bundle, pr_graph, pr_seq;
  predict->add_option("--bundle", pr_bundle, "trained bundle file")->required();
  predict->add_option("--graph", pr_graph, "circuit graph file")->required();
  predict->add_option("--seq", pr_seq, "whitespace-separated transformations")
      ->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference suite");
  uint64_t gc_seed = 20240811;
  double gc_tol = 1e-4;
  std::string gc_flip;
  gradcheck->add_option("--seed", gc_seed, "suite seed");
  gradcheck->add_option("--tol", gc_tol, "relative-error tolerance");
  gradcheck
      ->add_option("--inject-sign-flip", gc_flip,
                   "corrupt the named backward rule (testing hook)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      if (!gen_seed_given) spec.seed = default_seed();
      spec.validate();
      return cmd_gen(spec, gen_out);
    }
    if (train->parsed()) return cmd_train(train_flags, train_corpus, train_out);
    if (bench->parsed())
      return cmd_bench(bench_flags, bench_corpus, bench_out, bench_seeds);
    if (predict->parsed()) return cmd_predict(pr_bundle, pr_graph, pr_seq);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_tol, gc_flip);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

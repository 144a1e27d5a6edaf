// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// Joint sequence + circuit model: the two extractor features are
// concatenated (sequence first) and regressed through the fully connected
// head. Training follows Adam over MSE on z-normalized labels.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qor/aig.hpp"
#include "qor/config.hpp"
#include "qor/extractors.hpp"
#include "qor/gnn.hpp"
#include "qor/vocab.hpp"

namespace qor {

// Concatenation, sequence features first; widths 50/64 + 128 -> 178/192.
Tensor fuse(const Tensor& seq_feat, const Tensor& graph_feat);

// Mean of squared differences; gradient flows into pred (and target, if it
// requires grad).
Tensor mse_loss(const Tensor& pred, const Tensor& target);

struct FcHead {
  Tensor w1, b1, w2, b2, w3, b3, w4, b4;

  FcHead() = default;
  FcHead(int64_t input_width, int64_t h1, int64_t h2, int64_t h3, Rng& rng);

  // Three linear+relu stages with dropout after each, then the output linear.
  Tensor forward(const Tensor& x, double dropout_p, Mode mode, Rng& rng) const;
  void collect_params(NamedParams& out) const;
};

// Reduced dimensions for tests; the defaults are the shipped architecture.
struct ModelDims {
  TransformerConfig transformer;
  LstmConfig lstm;
  CnnConfig cnn;
  GnnConfig gnn;
  int64_t head_h1 = 512;
  int64_t head_h2 = 256;
  int64_t head_h3 = 256;
};

class JointModel {
 public:
  explicit JointModel(const RunConfig& cfg);
  JointModel(const RunConfig& cfg, const ModelDims& dims);

  // seq_ids is row-major [batch, seq_len]; result [batch, 1] in normalized
  // label units. Train mode applies dropout (consuming dropout_rng) and
  // updates BN running statistics.
  Tensor forward(const BatchedGraph& graphs, std::span<const int64_t> seq_ids,
                 int64_t batch, Mode mode, Rng& dropout_rng);

  // Eval-mode single prediction, denormalized to label units.
  double predict(const AigGraph& g, std::span<const int64_t> seq);
  double predict_normalized(const AigGraph& g, std::span<const int64_t> seq);

  NamedParams named_params() const;
  std::vector<Tensor> param_tensors() const;
  std::vector<std::pair<std::string, std::vector<double>*>> buffers();

  const RunConfig& config() const { return cfg_; }
  const ModelDims& dims() const { return dims_; }
  int64_t seq_len() const;
  int64_t seq_width() const;
  int64_t fused_width() const { return seq_width() + gnn_->output_width(); }

  double label_mean = 0.0;
  double label_std = 1.0;

 private:
  RunConfig cfg_;
  ModelDims dims_;
  std::optional<TransformerExtractor> transformer_;
  std::optional<LstmExtractor> lstm_;
  std::optional<CnnExtractor> cnn_;
  std::optional<GraphExtractor> gnn_;
  FcHead head_;
};

// ---- dataset -------------------------------------------------------------------

struct Dataset {
  std::vector<CorpusRecord> records;
  std::map<std::string, AigGraph> graphs;  // ordered: deterministic iteration

  const AigGraph& graph_for(const std::string& circuit_id) const;
};

// Loads the corpus plus one graph file per referenced circuit id, expected
// at <corpus dir>/<circuit_id>.aig.
Dataset load_dataset(const std::filesystem::path& corpus_path);

struct DatasetSplit {
  std::vector<size_t> train, val, test;
};

// Per circuit: 20% of sequences to test, then 20% of the remaining pool to
// validation. Requires at least 5 sequences per circuit.
DatasetSplit split_dataset(const Dataset& data, uint64_t seed);

// ---- training / evaluation --------------------------------------------------------

struct EpochStats {
  int64_t epoch = 0;       // 1-based
  double train_loss = 0;   // mean batch MSE seen during the epoch
  double train_mae = 0;    // eval-mode MAE on the train subset
  double val_mae = 0;      // eval-mode MAE on the validation subset
};

struct TrainResult {
  std::vector<EpochStats> history;
  int64_t best_epoch = 0;  // epoch whose parameters the model ends up with
};

// Runs the configured number of epochs (tracked per-epoch in history),
// restores the parameters of the best validation-MAE epoch, and stores the
// label normalization statistics on the model. stop_when, if given, is
// called after each epoch and ends training early when it returns true.
TrainResult train_model(JointModel& model, const Dataset& data,
                        const DatasetSplit& split,
                        const std::function<bool(const EpochStats&)>& stop_when = {});

struct RecordPrediction {
  size_t index = 0;  // into Dataset::records
  double y_norm = 0, yhat_norm = 0;
  double y_raw = 0, yhat_raw = 0;
};

struct EvalResult {
  double mae_norm = 0;
  double mae_raw = 0;
  std::vector<RecordPrediction> predictions;
};

// Eval-mode predictions for the given record indices. The MAE accumulates
// value-sorted absolute errors, so it is exactly invariant under record
// order.
EvalResult evaluate_model(JointModel& model, const Dataset& data,
                          std::span<const size_t> indices, int64_t batch_size);

// MAE (normalized units) of the predictor that always answers the training
// mean; closed form from the label statistics.
double constant_mean_baseline_mae(const Dataset& data, const DatasetSplit& split);

// ---- bundle ---------------------------------------------------------------------
//
// Versioned binary: magic "QORF", u32 format version, u64 config
// fingerprint, canonical config text, label statistics, seed, then a table
// of (name, shape, little-endian f64 payload) entries covering every
// parameter and BN buffer.

void save_bundle(JointModel& model, const std::filesystem::path& path);
JointModel load_bundle(const std::filesystem::path& path);
// Additionally rejects a bundle whose fingerprint differs from `expected`.
JointModel load_bundle(const std::filesystem::path& path, const RunConfig& expected);

// ---- benchmark matrix --------------------------------------------------------------

struct BenchCell {
  SeqKind seq = SeqKind::Transformer;
  GnnKind gnn = GnnKind::Gcn;
  std::vector<double> maes;  // test MAE per seed, normalized units
  double mean_mae = 0;
  double std_mae = 0;
  double seconds = 0;
  bool failed = false;
  std::string error;
};

// Trains all nine extractor pairs over n_seeds seeds (base.seed + s) and
// evaluates each on its test split. A failing cell is marked and the run
// continues.
std::vector<BenchCell> run_bench(
    const Dataset& data, const RunConfig& base, int n_seeds,
    const std::function<void(const BenchCell&)>& on_cell = {});

std::string format_bench_table(std::span<const BenchCell> cells, int n_seeds);

}  // namespace qor

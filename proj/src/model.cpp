// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0

#include "qor/model.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace qor {

namespace {

// RNG sub-stream tags; see README "Randomness".
constexpr uint64_t kParamStream = 1;
constexpr uint64_t kSplitStream = 2;
constexpr uint64_t kShuffleStream = 3;
constexpr uint64_t kDropoutStream = 4;

}  // namespace

Tensor fuse(const Tensor& seq_feat, const Tensor& graph_feat) {
  if (seq_feat.rank() != 2 || graph_feat.rank() != 2 ||
      seq_feat.dim(0) != graph_feat.dim(0))
    throw ShapeError("fuse: expected matching batches, got " +
                     shape_str(seq_feat.shape()) + " and " +
                     shape_str(graph_feat.shape()));
  const Tensor parts[] = {seq_feat, graph_feat};
  return concat_last(parts);
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("mse_loss: prediction " + shape_str(pred.shape()) +
                     " vs target " + shape_str(target.shape()));
  Tensor diff = sub(pred, target);
  return mean_all(mul(diff, diff));
}

// ---- head ----------------------------------------------------------------------

namespace {
Tensor init_linear(Shape shape, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(std::move(shape), -bound, bound, rng, true);
}
}  // namespace

FcHead::FcHead(int64_t input_width, int64_t h1, int64_t h2, int64_t h3, Rng& rng) {
  w1 = init_linear({input_width, h1}, input_width, rng);
  b1 = init_linear({h1}, input_width, rng);
  w2 = init_linear({h1, h2}, h1, rng);
  b2 = init_linear({h2}, h1, rng);
  w3 = init_linear({h2, h3}, h2, rng);
  b3 = init_linear({h3}, h2, rng);
  w4 = init_linear({h3, 1}, h3, rng);
  b4 = init_linear({1}, h3, rng);
}

Tensor FcHead::forward(const Tensor& x, double dropout_p, Mode mode,
                       Rng& rng) const {
  Tensor h = dropout(relu(add_rowvec(matmul(x, w1), b1)), dropout_p, mode, rng);
  h = dropout(relu(add_rowvec(matmul(h, w2), b2)), dropout_p, mode, rng);
  h = dropout(relu(add_rowvec(matmul(h, w3), b3)), dropout_p, mode, rng);
  return add_rowvec(matmul(h, w4), b4);
}

void FcHead::collect_params(NamedParams& out) const {
  out.emplace_back("head.w1", w1);
  out.emplace_back("head.b1", b1);
  out.emplace_back("head.w2", w2);
  out.emplace_back("head.b2", b2);
  out.emplace_back("head.w3", w3);
  out.emplace_back("head.b3", b3);
  out.emplace_back("head.w4", w4);
  out.emplace_back("head.b4", b4);
}

// ---- joint model ------------------------------------------------------------------

JointModel::JointModel(const RunConfig& cfg) : JointModel(cfg, ModelDims{}) {}

JointModel::JointModel(const RunConfig& cfg, const ModelDims& dims)
    : cfg_(cfg), dims_(dims) {
  cfg_.validate();
  Rng rng = Rng(cfg_.seed).fork(kParamStream);
  switch (cfg_.seq_extractor) {
    case SeqKind::Transformer: transformer_.emplace(dims_.transformer, rng); break;
    case SeqKind::Lstm: lstm_.emplace(dims_.lstm, rng); break;
    case SeqKind::Cnn: cnn_.emplace(dims_.cnn, rng); break;
  }
  GnnConfig gc = dims_.gnn;
  gc.kind = cfg_.graph_extractor;
  dims_.gnn = gc;
  gnn_.emplace(gc, rng);
  head_ = FcHead(seq_width() + gnn_->output_width(), dims_.head_h1,
                 dims_.head_h2, dims_.head_h3, rng);
}

int64_t JointModel::seq_len() const {
  switch (cfg_.seq_extractor) {
    case SeqKind::Transformer: return transformer_->config().seq_len;
    case SeqKind::Lstm: return lstm_->config().seq_len;
    case SeqKind::Cnn: return cnn_->config().seq_len;
  }
  return 0;
}

int64_t JointModel::seq_width() const {
  switch (cfg_.seq_extractor) {
    case SeqKind::Transformer: return transformer_->output_width();
    case SeqKind::Lstm: return lstm_->output_width();
    case SeqKind::Cnn: return cnn_->output_width();
  }
  return 0;
}

Tensor JointModel::forward(const BatchedGraph& graphs,
                           std::span<const int64_t> seq_ids, int64_t batch,
                           Mode mode, Rng& dropout_rng) {
  if (graphs.n_graphs != batch)
    throw ShapeError("forward: " + std::to_string(graphs.n_graphs) +
                     " graphs for a batch of " + std::to_string(batch));
  Tensor seq_feat;
  switch (cfg_.seq_extractor) {
    case SeqKind::Transformer: seq_feat = transformer_->forward(seq_ids, batch); break;
    case SeqKind::Lstm: seq_feat = lstm_->forward(seq_ids, batch); break;
    case SeqKind::Cnn: seq_feat = cnn_->forward(seq_ids, batch); break;
  }
  Tensor graph_feat = gnn_->forward(graphs, mode);
  Tensor fused = fuse(seq_feat, graph_feat);
  return head_.forward(fused, cfg_.dropout, mode, dropout_rng);
}

double JointModel::predict_normalized(const AigGraph& g,
                                      std::span<const int64_t> seq) {
  const AigGraph graphs[] = {g};
  BatchedGraph batch = batch_graphs(graphs, dims_.gnn.symmetrize_edges);
  Rng unused(0);
  return forward(batch, seq, 1, Mode::Eval, unused).item();
}

double JointModel::predict(const AigGraph& g, std::span<const int64_t> seq) {
  return label_std * predict_normalized(g, seq) + label_mean;
}

NamedParams JointModel::named_params() const {
  NamedParams out;
  switch (cfg_.seq_extractor) {
    case SeqKind::Transformer: transformer_->collect_params(out); break;
    case SeqKind::Lstm: lstm_->collect_params(out); break;
    case SeqKind::Cnn: cnn_->collect_params(out); break;
  }
  gnn_->collect_params(out);
  head_.collect_params(out);
  return out;
}

std::vector<Tensor> JointModel::param_tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> JointModel::buffers() {
  return gnn_->buffers();
}

// ---- dataset -------------------------------------------------------------------------

const AigGraph& Dataset::graph_for(const std::string& circuit_id) const {
  auto it = graphs.find(circuit_id);
  if (it == graphs.end())
    throw ValueError("no graph loaded for circuit '" + circuit_id + "'");
  return it->second;
}

Dataset load_dataset(const std::filesystem::path& corpus_path) {
  Dataset data;
  data.records = load_corpus_file(corpus_path);
  if (data.records.empty())
    throw ParseError("corpus " + corpus_path.string() + " has no records");
  const auto dir = corpus_path.parent_path();
  for (const auto& rec : data.records)
    if (!data.graphs.contains(rec.circuit_id))
      data.graphs.emplace(rec.circuit_id,
                          load_graph(dir / (rec.circuit_id + ".aig")));
  return data;
}

DatasetSplit split_dataset(const Dataset& data, uint64_t seed) {
  if (data.records.empty()) throw ValueError("split_dataset: empty corpus");
  std::map<std::string, std::vector<size_t>> per_circuit;
  for (size_t i = 0; i < data.records.size(); ++i)
    per_circuit[data.records[i].circuit_id].push_back(i);
  Rng rng = Rng(seed).fork(kSplitStream);
  DatasetSplit split;
  for (auto& [id, idx] : per_circuit) {
    if (idx.size() < 5)
      throw ValueError("circuit '" + id + "' has only " +
                       std::to_string(idx.size()) +
                       " sequences; the 80/20 split needs at least 5");
    rng.shuffle(std::span<size_t>(idx));
    const size_t n_test = idx.size() / 5;
    const size_t n_val = (idx.size() - n_test) / 5;
    for (size_t k = 0; k < idx.size(); ++k) {
      if (k < n_test)
        split.test.push_back(idx[k]);
      else if (k < n_test + n_val)
        split.val.push_back(idx[k]);
      else
        split.train.push_back(idx[k]);
    }
  }
  return split;
}

// ---- training --------------------------------------------------------------------------

namespace {

struct Batch {
  BatchedGraph graphs;
  std::vector<int64_t> seq_ids;
  Tensor target;  // [B, 1] normalized
  int64_t size = 0;
};

Batch make_batch(const JointModel& model, const Dataset& data,
                 std::span<const size_t> indices) {
  Batch b;
  b.size = static_cast<int64_t>(indices.size());
  const int64_t len = model.seq_len();
  std::vector<AigGraph> graphs;
  graphs.reserve(indices.size());
  std::vector<double> targets;
  targets.reserve(indices.size());
  for (size_t i : indices) {
    const CorpusRecord& rec = data.records[i];
    if (static_cast<int64_t>(rec.tokens.size()) != len)
      throw ValueError("record " + std::to_string(i) + " has " +
                       std::to_string(rec.tokens.size()) +
                       " tokens, model expects " + std::to_string(len));
    graphs.push_back(data.graph_for(rec.circuit_id));
    b.seq_ids.insert(b.seq_ids.end(), rec.tokens.begin(), rec.tokens.end());
    targets.push_back((static_cast<double>(rec.label) - model.label_mean) /
                      model.label_std);
  }
  b.graphs = batch_graphs(graphs, model.dims().gnn.symmetrize_edges);
  b.target = Tensor::from({b.size, 1}, std::move(targets));
  return b;
}

struct Snapshot {
  std::vector<std::vector<double>> params;
  std::vector<std::vector<double>> buffers;
};

Snapshot take_snapshot(JointModel& model) {
  Snapshot s;
  for (Tensor& t : model.param_tensors())
    s.params.emplace_back(t.data().begin(), t.data().end());
  for (auto& [name, buf] : model.buffers()) s.buffers.push_back(*buf);
  return s;
}

void restore_snapshot(JointModel& model, const Snapshot& s) {
  auto params = model.param_tensors();
  for (size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].mutable_data();
    std::copy(s.params[i].begin(), s.params[i].end(), dst.begin());
  }
  auto bufs = model.buffers();
  for (size_t i = 0; i < bufs.size(); ++i) *bufs[i].second = s.buffers[i];
}

// Order-independent mean of absolute errors: sorting makes the summation
// order a function of the values only.
double sorted_mean_abs(std::vector<double> errs) {
  std::sort(errs.begin(), errs.end());
  double acc = 0.0;
  for (double e : errs) acc += e;
  return acc / static_cast<double>(errs.size());
}

}  // namespace

EvalResult evaluate_model(JointModel& model, const Dataset& data,
                          std::span<const size_t> indices, int64_t batch_size) {
  if (indices.empty()) throw ValueError("evaluate: empty record set");
  if (batch_size < 1) throw ValueError("evaluate: batch size must be >= 1");
  EvalResult result;
  Rng unused(0);
  std::vector<double> abs_errs;
  abs_errs.reserve(indices.size());
  for (size_t pos = 0; pos < indices.size(); pos += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(indices.size(), pos + static_cast<size_t>(batch_size));
    auto chunk = indices.subspan(pos, end - pos);
    Batch b = make_batch(model, data, chunk);
    Tensor pred = model.forward(b.graphs, b.seq_ids, b.size, Mode::Eval, unused);
    for (size_t k = 0; k < chunk.size(); ++k) {
      RecordPrediction p;
      p.index = chunk[k];
      p.y_norm = b.target.data()[k];
      p.yhat_norm = pred.data()[k];
      p.y_raw = static_cast<double>(data.records[chunk[k]].label);
      p.yhat_raw = model.label_std * p.yhat_norm + model.label_mean;
      abs_errs.push_back(std::fabs(p.yhat_norm - p.y_norm));
      result.predictions.push_back(p);
    }
  }
  result.mae_norm = sorted_mean_abs(std::move(abs_errs));
  result.mae_raw = result.mae_norm * model.label_std;
  return result;
}

double constant_mean_baseline_mae(const Dataset& data, const DatasetSplit& split) {
  if (split.train.empty() || split.test.empty())
    throw ValueError("baseline: empty train or test split");
  double mean = 0.0;
  for (size_t i : split.train) mean += static_cast<double>(data.records[i].label);
  mean /= static_cast<double>(split.train.size());
  double var = 0.0;
  for (size_t i : split.train) {
    const double d = static_cast<double>(data.records[i].label) - mean;
    var += d * d;
  }
  var /= static_cast<double>(split.train.size());
  const double sd = std::sqrt(var);
  if (sd <= 0) throw ValueError("baseline: training labels have zero variance");
  std::vector<double> errs;
  errs.reserve(split.test.size());
  for (size_t i : split.test)
    errs.push_back(std::fabs((static_cast<double>(data.records[i].label) - mean) / sd));
  return sorted_mean_abs(std::move(errs));
}

TrainResult train_model(JointModel& model, const Dataset& data,
                        const DatasetSplit& split,
                        const std::function<bool(const EpochStats&)>& stop_when) {
  const RunConfig& cfg = model.config();
  if (split.train.empty()) throw ValueError("train: empty training split");

  double mean = 0.0;
  for (size_t i : split.train) mean += static_cast<double>(data.records[i].label);
  mean /= static_cast<double>(split.train.size());
  double var = 0.0;
  for (size_t i : split.train) {
    const double d = static_cast<double>(data.records[i].label) - mean;
    var += d * d;
  }
  var /= static_cast<double>(split.train.size());
  if (var <= 0)
    throw ValueError("train: labels in the training split have zero variance, "
                     "cannot z-normalize");
  model.label_mean = mean;
  model.label_std = std::sqrt(var);

  auto params = model.param_tensors();
  AdamState adam;
  adam.lr = cfg.lr;
  Rng shuffle_rng = Rng(cfg.seed).fork(kShuffleStream);
  Rng dropout_rng = Rng(cfg.seed).fork(kDropoutStream);

  std::vector<size_t> order(split.train.begin(), split.train.end());
  TrainResult result;
  double best_crit = std::numeric_limits<double>::infinity();
  Snapshot best;

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<size_t>(order));
    double loss_sum = 0.0;
    int64_t seen = 0;
    for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch)) {
      const size_t end = std::min(order.size(), pos + static_cast<size_t>(cfg.batch));
      Batch b = make_batch(model, data, std::span<const size_t>(order).subspan(pos, end - pos));
      for (Tensor& p : params) p.zero_grad();
      Tensor pred = model.forward(b.graphs, b.seq_ids, b.size, Mode::Train, dropout_rng);
      Tensor loss = mse_loss(pred, b.target);
      const double l = loss.item();
      if (!std::isfinite(l))
        throw DivergenceError("training diverged: non-finite loss at epoch " +
                              std::to_string(epoch));
      backward(loss);
      adam_step(params, adam);
      loss_sum += l * static_cast<double>(b.size);
      seen += b.size;
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(seen);
    st.train_mae = evaluate_model(model, data, split.train, cfg.batch).mae_norm;
    st.val_mae = split.val.empty()
                     ? std::numeric_limits<double>::quiet_NaN()
                     : evaluate_model(model, data, split.val, cfg.batch).mae_norm;
    result.history.push_back(st);

    const double crit = split.val.empty() ? st.train_mae : st.val_mae;
    if (crit < best_crit) {
      best_crit = crit;
      result.best_epoch = epoch;
      best = take_snapshot(model);
    }
    if (stop_when && stop_when(st)) break;
  }
  if (result.best_epoch > 0) restore_snapshot(model, best);
  return result;
}

// ---- bundle ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'Q', 'O', 'R', 'F'};
constexpr uint32_t kBundleVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw FormatError("bundle: truncated file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw FormatError("bundle: truncated file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

void put_entry(std::ostream& out, const std::string& name,
               std::span<const int64_t> dims, std::span<const double> data) {
  put_u32(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<uint32_t>(dims.size()));
  for (int64_t d : dims) put_u64(out, static_cast<uint64_t>(d));
  for (double v : data) put_f64(out, v);
}

struct EntryHeader {
  std::string name;
  std::vector<int64_t> dims;
  int64_t numel = 1;
};

EntryHeader get_entry_header(std::istream& in) {
  EntryHeader e;
  const uint32_t name_len = get_u32(in);
  if (name_len > 4096) throw FormatError("bundle: absurd entry name length");
  e.name.resize(name_len);
  if (!in.read(e.name.data(), name_len)) throw FormatError("bundle: truncated file");
  const uint32_t ndim = get_u32(in);
  if (ndim > 8) throw FormatError("bundle: absurd entry rank");
  for (uint32_t i = 0; i < ndim; ++i) {
    e.dims.push_back(static_cast<int64_t>(get_u64(in)));
    e.numel *= e.dims.back();
  }
  if (e.numel < 0 || e.numel > (int64_t{1} << 32))
    throw FormatError("bundle: absurd entry size");
  return e;
}

}  // namespace

void save_bundle(JointModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write bundle file " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kBundleVersion);
  const std::string cfg_text = model.config().canonical_text();
  put_u64(out, model.config().fingerprint());
  put_u32(out, static_cast<uint32_t>(cfg_text.size()));
  out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  put_f64(out, model.label_mean);
  put_f64(out, model.label_std);
  put_u64(out, model.config().seed);

  auto named = model.named_params();
  auto bufs = model.buffers();
  put_u32(out, static_cast<uint32_t>(named.size() + bufs.size()));
  for (auto& [name, t] : named) put_entry(out, name, t.shape(), t.data());
  for (auto& [name, buf] : bufs) {
    const int64_t dims[] = {static_cast<int64_t>(buf->size())};
    put_entry(out, name, dims, *buf);
  }
  if (!out) throw Error("write failed for bundle file " + path.string());
}

JointModel load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open bundle file " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bundle: bad magic bytes, not a model bundle");
  const uint32_t version = get_u32(in);
  if (version != kBundleVersion)
    throw FormatError("bundle: unsupported format version " + std::to_string(version));
  const uint64_t fingerprint = get_u64(in);
  const uint32_t cfg_len = get_u32(in);
  if (cfg_len > 65536) throw FormatError("bundle: absurd config length");
  std::string cfg_text(cfg_len, '\0');
  if (!in.read(cfg_text.data(), cfg_len)) throw FormatError("bundle: truncated file");
  if (fnv1a64(cfg_text) != fingerprint)
    throw FormatError("bundle: fingerprint does not match the embedded config");
  RunConfig cfg = RunConfig::from_text(cfg_text, path.filename().string());

  JointModel model(cfg);
  model.label_mean = get_f64(in);
  model.label_std = get_f64(in);
  if (!(model.label_std > 0))
    throw FormatError("bundle: non-positive label standard deviation");
  const uint64_t seed = get_u64(in);
  if (seed != cfg.seed)
    throw FormatError("bundle: seed field disagrees with the embedded config");

  auto named = model.named_params();
  auto bufs = model.buffers();
  const uint32_t n_entries = get_u32(in);
  if (n_entries != named.size() + bufs.size())
    throw FormatError("bundle: expected " +
                      std::to_string(named.size() + bufs.size()) +
                      " entries, file has " + std::to_string(n_entries));
  for (auto& [name, t] : named) {
    EntryHeader e = get_entry_header(in);
    if (e.name != name)
      throw FormatError("bundle: entry '" + e.name + "' where '" + name +
                        "' was expected");
    if (e.dims != t.shape())
      throw FormatError("bundle: entry '" + name + "' has shape " +
                        shape_str(e.dims) + ", expected " + shape_str(t.shape()));
    auto dst = t.mutable_data();
    for (int64_t i = 0; i < e.numel; ++i) dst[static_cast<size_t>(i)] = get_f64(in);
  }
  for (auto& [name, buf] : bufs) {
    EntryHeader e = get_entry_header(in);
    if (e.name != name)
      throw FormatError("bundle: entry '" + e.name + "' where '" + name +
                        "' was expected");
    if (e.numel != static_cast<int64_t>(buf->size()))
      throw FormatError("bundle: entry '" + name + "' has wrong size");
    for (int64_t i = 0; i < e.numel; ++i) (*buf)[static_cast<size_t>(i)] = get_f64(in);
  }
  in.peek();
  if (!in.eof()) throw FormatError("bundle: trailing bytes after last entry");
  return model;
}

JointModel load_bundle(const std::filesystem::path& path, const RunConfig& expected) {
  JointModel model = load_bundle(path);
  if (model.config().fingerprint() != expected.fingerprint())
    throw FormatError("bundle: configuration fingerprint mismatch (bundle " +
                      model.config().canonical_text() + " vs expected " +
                      expected.canonical_text() + ")");
  return model;
}

// ---- benchmark matrix ---------------------------------------------------------------------

std::vector<BenchCell> run_bench(
    const Dataset& data, const RunConfig& base, int n_seeds,
    const std::function<void(const BenchCell&)>& on_cell) {
  if (n_seeds < 1) throw ValueError("bench: need at least one seed");
  const SeqKind seqs[] = {SeqKind::Transformer, SeqKind::Cnn, SeqKind::Lstm};
  const GnnKind gnns[] = {GnnKind::Gcn, GnnKind::Gat, GnnKind::Sage};
  std::vector<BenchCell> cells;
  for (SeqKind sk : seqs) {
    for (GnnKind gk : gnns) {
      BenchCell cell;
      cell.seq = sk;
      cell.gnn = gk;
      const auto t0 = std::chrono::steady_clock::now();
      for (int s = 0; s < n_seeds; ++s) {
        RunConfig cfg = base;
        cfg.seq_extractor = sk;
        cfg.graph_extractor = gk;
        cfg.seed = base.seed + static_cast<uint64_t>(s);
        try {
          DatasetSplit split = split_dataset(data, cfg.seed);
          JointModel model(cfg);
          train_model(model, data, split);
          cell.maes.push_back(
              evaluate_model(model, data, split.test, cfg.batch).mae_norm);
        } catch (const std::exception& e) {
          cell.failed = true;
          cell.error = e.what();
          break;
        }
      }
      cell.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (!cell.maes.empty()) {
        double m = 0;
        for (double v : cell.maes) m += v;
        m /= static_cast<double>(cell.maes.size());
        cell.mean_mae = m;
        if (cell.maes.size() > 1) {
          double acc = 0;
          for (double v : cell.maes) acc += (v - m) * (v - m);
          cell.std_mae = std::sqrt(acc / static_cast<double>(cell.maes.size() - 1));
        }
      }
      if (on_cell) on_cell(cell);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string format_bench_table(std::span<const BenchCell> cells, int n_seeds) {
  auto find = [&](SeqKind s, GnnKind g) -> const BenchCell* {
    for (const auto& c : cells)
      if (c.seq == s && c.gnn == g) return &c;
    return nullptr;
  };
  std::ostringstream os;
  os << "Test MAE (normalized units), mean +/- sample std over " << n_seeds
     << " seeds; wall time per cell in seconds.\n\n";
  os << "              ";
  for (SeqKind s : {SeqKind::Transformer, SeqKind::Cnn, SeqKind::Lstm}) {
    os.width(26);
    os << std::left << to_string(s);
  }
  os << "\n";
  for (GnnKind g : {GnnKind::Gcn, GnnKind::Gat, GnnKind::Sage}) {
    os.width(14);
    os << std::left << to_string(g);
    for (SeqKind s : {SeqKind::Transformer, SeqKind::Cnn, SeqKind::Lstm}) {
      const BenchCell* c = find(s, g);
      std::ostringstream cellText;
      if (!c)
        cellText << "-";
      else if (c->failed)
        cellText << "FAILED";
      else {
        cellText.setf(std::ios::fixed);
        cellText.precision(4);
        cellText << c->mean_mae << "+/-" << c->std_mae << " (";
        cellText.precision(1);
        cellText << c->seconds << "s)";
      }
      os.width(26);
      os << std::left << cellText.str();
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace qor

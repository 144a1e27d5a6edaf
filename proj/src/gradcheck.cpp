// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0

#include "qor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qor/aig.hpp"
#include "qor/datagen.hpp"
#include "qor/extractors.hpp"
#include "qor/gnn.hpp"
#include "qor/model.hpp"

namespace qor {

bool GradCheckReport::all_pass() const {
  for (const auto& e : entries)
    if (!e.pass) return false;
  return !entries.empty();
}

double GradCheckReport::worst() const {
  double w = 0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_err);
  return w;
}

double gradcheck_case(std::span<Tensor> leaves,
                      const std::function<Tensor()>& forward, Rng& coord_rng,
                      int64_t max_coords, double h) {
  for (Tensor& l : leaves) l.zero_grad();
  backward(forward());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (Tensor& l : leaves)
    analytic.emplace_back(l.grad().begin(), l.grad().end());

  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    const int64_t n = leaves[li].size();
    std::vector<int64_t> coords;
    if (n <= max_coords) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t c = 0; c < n; ++c) coords[static_cast<size_t>(c)] = c;
    } else {
      for (int64_t c = 0; c < max_coords; ++c)
        coords.push_back(static_cast<int64_t>(
            coord_rng.next_below(static_cast<uint64_t>(n))));
    }
    auto data = leaves[li].mutable_data();
    for (int64_t c : coords) {
      const double orig = data[static_cast<size_t>(c)];
      data[static_cast<size_t>(c)] = orig + h;
      const double fp = forward().item();
      data[static_cast<size_t>(c)] = orig - h;
      const double fm = forward().item();
      data[static_cast<size_t>(c)] = orig;
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic[li][static_cast<size_t>(c)];
      const double rel = std::fabs(ana - num) /
                         std::max({1.0, std::fabs(ana), std::fabs(num)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

namespace {

// Loss projection: a fixed random linear functional of the output exercises
// every output coordinate.
Tensor project(const Tensor& out, Rng& rng) {
  Tensor r = Tensor::uniform(out.shape(), -1.0, 1.0, rng);
  return sum_all(mul(out, r));
}

// Values bounded away from zero so kinked activations see no crossing
// within the finite-difference step.
Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(shape, true);
  for (double& v : t.node()->val) {
    const double mag = rng.uniform(0.15, 1.0);
    v = rng.next_double() < 0.5 ? -mag : mag;
  }
  return t;
}

// BN gain/bias start at 1/0; a dead relu column then leaves the following
// relu exactly at its kink, where finite differences are invalid. Composite
// checks move the affine parameters to a generic differentiable point.
void jitter_batchnorm(NamedParams& named, Rng& rng) {
  for (auto& [name, t] : named) {
    if (name.ends_with(".beta"))
      for (double& v : t.node()->val) v = rng.uniform(0.1, 0.3);
    else if (name.ends_with(".gamma"))
      for (double& v : t.node()->val) v = rng.uniform(0.8, 1.2);
  }
}

AigGraph tiny_graph() {
  AigGraph g;
  g.types = {NodeType::PrimaryInput, NodeType::PrimaryInput, NodeType::AndGate,
             NodeType::PrimaryOutput};
  g.inverted_inputs = {0, 0, 1, 1};
  g.edges = {{0, 2}, {1, 2}, {2, 3}};
  validate_graph(g);
  return g;
}

AigGraph small_graph() {
  // 3 inputs, 3 AND gates, 1 output.
  AigGraph g;
  g.types = {NodeType::PrimaryInput, NodeType::PrimaryInput,
             NodeType::PrimaryInput, NodeType::AndGate, NodeType::AndGate,
             NodeType::AndGate, NodeType::PrimaryOutput};
  g.inverted_inputs = {0, 0, 0, 0, 0, 2, 0};
  g.edges = {{0, 3}, {1, 3}, {1, 4}, {2, 4}, {3, 5}, {4, 5}, {5, 6}};
  validate_graph(g);
  return g;
}

struct Suite {
  GradCheckReport report;
  Rng rng;
  double tol;

  Suite(uint64_t seed, double tolerance) : rng(seed), tol(tolerance) {
    report.tolerance = tolerance;
  }

  void run(const std::string& name, std::span<Tensor> leaves,
           const std::function<Tensor()>& forward, int64_t max_coords = 64) {
    Rng coord_rng = rng.fork(fnv1a64(name));
    GradCheckEntry entry;
    entry.name = name;
    entry.max_rel_err = gradcheck_case(leaves, forward, coord_rng, max_coords);
    entry.pass = entry.max_rel_err < tol;
    report.entries.push_back(std::move(entry));
  }
};

}  // namespace

GradCheckReport run_gradient_checks(uint64_t seed, double tolerance) {
  Suite s(seed, tolerance);
  Rng& rng = s.rng;

  {
    Tensor a = Tensor::uniform({3, 4}, -1, 1, rng, true);
    Tensor b = Tensor::uniform({4, 2}, -1, 1, rng, true);
    Tensor leaves[] = {a, b};
    Rng proj = rng.fork(1);
    s.run("matmul", leaves, [&]() mutable {
      Rng p = proj;
      return project(matmul(a, b), p);
    });
  }
  {
    Tensor a = Tensor::uniform({3, 4}, -1, 1, rng, true);
    Tensor b = Tensor::uniform({5, 4}, -1, 1, rng, true);
    Tensor leaves[] = {a, b};
    Rng proj = rng.fork(2);
    s.run("matmul_nt", leaves, [&]() mutable {
      Rng p = proj;
      return project(matmul_nt(a, b), p);
    });
  }
  {
    Tensor a = Tensor::uniform({2, 3, 2}, -1, 1, rng, true);
    Tensor b = Tensor::uniform({2, 2, 4}, -1, 1, rng, true);
    Tensor leaves[] = {a, b};
    Rng proj = rng.fork(3);
    s.run("bmm", leaves, [&]() mutable {
      Rng p = proj;
      return project(bmm(a, b), p);
    });
  }
  {
    Tensor a = Tensor::uniform({2, 3, 2}, -1, 1, rng, true);
    Tensor b = Tensor::uniform({2, 4, 2}, -1, 1, rng, true);
    Tensor leaves[] = {a, b};
    Rng proj = rng.fork(4);
    s.run("bmm_trans", leaves, [&]() mutable {
      Rng p = proj;
      return project(bmm(a, b, true), p);
    });
  }
  {
    Tensor a = Tensor::uniform({3, 3}, -1, 1, rng, true);
    Tensor b = Tensor::uniform({3, 3}, -1, 1, rng, true);
    Tensor leaves[] = {a, b};
    Rng proj = rng.fork(5);
    s.run("add", leaves, [&]() mutable {
      Rng p = proj;
      return project(add(a, b), p);
    });
    s.run("sub", leaves, [&]() mutable {
      Rng p = proj;
      return project(sub(a, b), p);
    });
    s.run("mul", leaves, [&]() mutable {
      Rng p = proj;
      return project(mul(a, b), p);
    });
    Tensor la[] = {a};
    s.run("scale", la, [&]() mutable {
      Rng p = proj;
      return project(scale(a, 0.7), p);
    });
  }
  {
    Tensor x = Tensor::uniform({4, 3}, -1, 1, rng, true);
    Tensor v = Tensor::uniform({3}, -1, 1, rng, true);
    Tensor leaves[] = {x, v};
    Rng proj = rng.fork(6);
    s.run("add_rowvec", leaves, [&]() mutable {
      Rng p = proj;
      return project(add_rowvec(x, v), p);
    });
  }
  {
    Tensor x = Tensor::uniform({4, 3}, -1, 1, rng, true);
    Tensor sc = Tensor::uniform({4}, -1, 1, rng, true);
    Tensor leaves[] = {x, sc};
    Rng proj = rng.fork(7);
    s.run("scale_rows", leaves, [&]() mutable {
      Rng p = proj;
      return project(scale_rows(x, sc), p);
    });
  }
  {
    Tensor x = away_from_zero({3, 4}, rng);
    Tensor leaves[] = {x};
    Rng proj = rng.fork(8);
    s.run("relu", leaves, [&]() mutable {
      Rng p = proj;
      return project(relu(x), p);
    });
    s.run("elu", leaves, [&]() mutable {
      Rng p = proj;
      return project(elu(x), p);
    });
    s.run("leaky_relu", leaves, [&]() mutable {
      Rng p = proj;
      return project(leaky_relu(x, 0.2), p);
    });
    s.run("sigmoid", leaves, [&]() mutable {
      Rng p = proj;
      return project(sigmoid(x), p);
    });
    s.run("tanh", leaves, [&]() mutable {
      Rng p = proj;
      return project(tanh_act(x), p);
    });
  }
  {
    Tensor x = Tensor::uniform({3, 5}, -2, 2, rng, true);
    Tensor leaves[] = {x};
    Rng proj = rng.fork(9);
    s.run("softmax", leaves, [&]() mutable {
      Rng p = proj;
      return project(softmax_last(x), p);
    });
  }
  {
    Tensor x = Tensor::uniform({4, 6}, -1, 1, rng, true);
    Tensor g = Tensor::uniform({6}, 0.5, 1.5, rng, true);
    Tensor b = Tensor::uniform({6}, -0.5, 0.5, rng, true);
    Tensor leaves[] = {x, g, b};
    Rng proj = rng.fork(10);
    s.run("layer_norm", leaves, [&]() mutable {
      Rng p = proj;
      return project(layer_norm(x, g, b), p);
    });
  }
  {
    Tensor x = Tensor::uniform({6, 3}, -1, 1, rng, true);
    BatchNorm bn(3);
    Tensor leaves[] = {x, bn.gamma, bn.beta};
    Rng proj = rng.fork(11);
    s.run("batch_norm_train", leaves, [&]() mutable {
      Rng p = proj;
      return project(batch_norm(x, bn, Mode::Train), p);
    });
    bn.running_mean = {0.1, -0.2, 0.3};
    bn.running_var = {1.1, 0.9, 1.3};
    s.run("batch_norm_eval", leaves, [&]() mutable {
      Rng p = proj;
      return project(batch_norm(x, bn, Mode::Eval), p);
    });
  }
  {
    Tensor x = Tensor::uniform({4, 5}, -1, 1, rng, true);
    Tensor leaves[] = {x};
    Rng proj = rng.fork(12);
    s.run("dropout", leaves, [&]() mutable {
      Rng p = proj;
      Rng mask(42);  // same mask on every evaluation
      return project(dropout(x, 0.3, Mode::Train, mask), p);
    });
  }
  {
    Tensor table = Tensor::uniform({5, 3}, -1, 1, rng, true);
    const std::vector<int64_t> ids = {2, 0, 4, 2};
    Tensor leaves[] = {table};
    Rng proj = rng.fork(13);
    s.run("gather_rows", leaves, [&]() mutable {
      Rng p = proj;
      return project(gather_rows(table, ids), p);
    });
  }
  {
    Tensor v = Tensor::uniform({5, 2}, -1, 1, rng, true);
    const std::vector<int64_t> seg = {0, 1, 0, 2, 1};
    Tensor leaves[] = {v};
    Rng proj = rng.fork(14);
    s.run("segment_sum", leaves, [&]() mutable {
      Rng p = proj;
      return project(segment_reduce(v, seg, 3, Reduce::Sum), p);
    });
    s.run("segment_mean", leaves, [&]() mutable {
      Rng p = proj;
      return project(segment_reduce(v, seg, 3, Reduce::Mean), p);
    });
    s.run("segment_max", leaves, [&]() mutable {
      Rng p = proj;
      return project(segment_reduce(v, seg, 3, Reduce::Max), p);
    });
  }
  {
    Tensor sc = Tensor::uniform({6}, -1, 1, rng, true);
    const std::vector<int64_t> seg = {0, 0, 1, 1, 1, 2};
    Tensor leaves[] = {sc};
    Rng proj = rng.fork(15);
    s.run("segment_softmax", leaves, [&]() mutable {
      Rng p = proj;
      return project(segment_softmax(sc, seg, 3), p);
    });
  }
  {
    Tensor a = Tensor::uniform({2, 2}, -1, 1, rng, true);
    Tensor b = Tensor::uniform({2, 3}, -1, 1, rng, true);
    Tensor c = Tensor::uniform({2, 1}, -1, 1, rng, true);
    Tensor leaves[] = {a, b, c};
    Rng proj = rng.fork(16);
    s.run("concat", leaves, [&]() mutable {
      Rng p = proj;
      const Tensor parts[] = {a, b, c};
      return project(concat_last(parts), p);
    });
  }
  {
    Tensor x = Tensor::uniform({3, 6}, -1, 1, rng, true);
    Tensor leaves[] = {x};
    Rng proj = rng.fork(17);
    s.run("slice", leaves, [&]() mutable {
      Rng p = proj;
      return project(slice_last(x, 2, 3), p);
    });
    s.run("reshape", leaves, [&]() mutable {
      Rng p = proj;
      return project(reshape(x, {2, 9}), p);
    });
    s.run("sum", leaves, [&]() mutable { return sum_all(x); });
    s.run("mean", leaves, [&]() mutable { return mean_all(x); });
  }
  {
    Tensor x = Tensor::uniform({2, 12}, -1, 1, rng, true);
    Tensor k = Tensor::uniform({4}, -1, 1, rng, true);
    Tensor b = Tensor::uniform({1}, -1, 1, rng, true);
    Tensor leaves[] = {x, k, b};
    Rng proj = rng.fork(18);
    s.run("conv1d", leaves, [&]() mutable {
      Rng p = proj;
      return project(conv1d(x, k, b, 2), p);
    });
  }
  {
    Tensor q = Tensor::uniform({3}, -1, 1, rng, true);
    Tensor keys = Tensor::uniform({4, 3}, -1, 1, rng, true);
    Tensor leaves[] = {q, keys};
    Rng proj = rng.fork(19);
    s.run("attention_scores", leaves, [&]() mutable {
      Rng p = proj;
      return project(attention_scores(q, keys), p);
    });
  }
  {
    Tensor x = Tensor::uniform({4, 4}, -1, 1, rng, true);
    Tensor wq = Tensor::uniform({4, 2}, -1, 1, rng, true);
    Tensor wk = Tensor::uniform({4, 2}, -1, 1, rng, true);
    Tensor wv = Tensor::uniform({4, 2}, -1, 1, rng, true);
    Tensor leaves[] = {x, wq, wk, wv};
    Rng proj = rng.fork(20);
    s.run("self_attention_head", leaves, [&]() mutable {
      Rng p = proj;
      return project(self_attention_head(x, wq, wk, wv), p);
    });
  }
  {
    Rng init = rng.fork(21);
    TransformerConfig cfg{.seq_len = 5, .d_model = 4, .heads = 2,
                          .ff_width = 8, .blocks = 1, .out_width = 6};
    TransformerExtractor tx(cfg, init);
    NamedParams named;
    tx.collect_params(named);
    std::vector<Tensor> leaves;
    for (auto& [n, t] : named) leaves.push_back(t);
    const std::vector<int64_t> ids = {2, 4, 0, 6, 1, 3, 3, 5, 2, 0};  // batch 2
    Rng proj = rng.fork(22);
    s.run("multi_head+transformer_block", std::span<Tensor>(leaves),
          [&]() mutable {
            Rng p = proj;
            Tensor x0 = add(gather_rows(tx.token_table(), ids),
                            gather_rows(tx.position_table(),
                                        std::vector<int64_t>{0, 1, 2, 3, 4, 0,
                                                             1, 2, 3, 4}));
            Tensor x = reshape(x0, {2, 5, 4});
            return project(transformer_block(x, tx.block(0)), p);
          });
    s.run("transformer_extract_small", std::span<Tensor>(leaves),
          [&]() mutable {
            Rng p = proj;
            return project(tx.forward(ids, 2), p);
          });
  }
  {
    Rng init = rng.fork(23);
    TransformerExtractor tx(TransformerConfig{}, init);
    NamedParams named;
    tx.collect_params(named);
    std::vector<Tensor> leaves;
    for (auto& [n, t] : named) leaves.push_back(t);
    std::vector<int64_t> ids(20);
    for (size_t i = 0; i < ids.size(); ++i)
      ids[i] = static_cast<int64_t>(rng.next_below(7));
    Rng proj = rng.fork(24);
    s.run("transformer_extract_full", std::span<Tensor>(leaves),
          [&]() mutable {
            Rng p = proj;
            return project(tx.forward(ids, 1), p);
          },
          /*max_coords=*/12);
  }
  {
    Tensor x = Tensor::uniform({2, 3}, -1, 1, rng, true);
    Tensor h = Tensor::uniform({2, 4}, -1, 1, rng, true);
    Tensor c = Tensor::uniform({2, 4}, -1, 1, rng, true);
    Rng init = rng.fork(25);
    LstmLayerParams lp;
    lp.w_ih = Tensor::uniform({3, 16}, -0.5, 0.5, init, true);
    lp.w_hh = Tensor::uniform({4, 16}, -0.5, 0.5, init, true);
    lp.bias = Tensor::uniform({16}, -0.5, 0.5, init, true);
    Tensor leaves[] = {x, h, c, lp.w_ih, lp.w_hh, lp.bias};
    Rng proj = rng.fork(26);
    s.run("lstm_cell", leaves, [&]() mutable {
      Rng p = proj;
      auto [hn, cn] = lstm_cell(x, h, c, lp);
      const Tensor parts[] = {hn, cn};
      return project(concat_last(parts), p);
    });
  }
  {
    Rng init = rng.fork(27);
    LstmConfig cfg{.seq_len = 5, .embed_width = 3, .hidden_width = 4, .layers = 2};
    LstmExtractor lx(cfg, init);
    NamedParams named;
    lx.collect_params(named);
    std::vector<Tensor> leaves;
    for (auto& [n, t] : named) leaves.push_back(t);
    const std::vector<int64_t> ids = {2, 4, 0, 6, 1, 3, 3, 5, 2, 0};
    Rng proj = rng.fork(28);
    s.run("lstm_extract_small", std::span<Tensor>(leaves), [&]() mutable {
      Rng p = proj;
      return project(lx.forward(ids, 2), p);
    });
  }
  {
    Rng init = rng.fork(29);
    LstmExtractor lx(LstmConfig{}, init);
    NamedParams named;
    lx.collect_params(named);
    std::vector<Tensor> leaves;
    for (auto& [n, t] : named) leaves.push_back(t);
    std::vector<int64_t> ids(20);
    for (size_t i = 0; i < ids.size(); ++i)
      ids[i] = static_cast<int64_t>(rng.next_below(7));
    Rng proj = rng.fork(30);
    s.run("lstm_extract_full", std::span<Tensor>(leaves),
          [&]() mutable {
            Rng p = proj;
            return project(lx.forward(ids, 1), p);
          },
          /*max_coords=*/8);
  }
  {
    Rng init = rng.fork(31);
    CnnConfig cfg{.seq_len = 5, .embed_width = 3, .kernels = {7, 9}, .stride = 2};
    CnnExtractor cx(cfg, init);
    NamedParams named;
    cx.collect_params(named);
    std::vector<Tensor> leaves;
    for (auto& [n, t] : named) leaves.push_back(t);
    const std::vector<int64_t> ids = {2, 4, 0, 6, 1, 3, 3, 5, 2, 0};
    Rng proj = rng.fork(32);
    s.run("cnn_extract_small", std::span<Tensor>(leaves), [&]() mutable {
      Rng p = proj;
      return project(cx.forward(ids, 2), p);
    });
  }
  {
    Rng init = rng.fork(33);
    CnnExtractor cx(CnnConfig{}, init);
    NamedParams named;
    cx.collect_params(named);
    std::vector<Tensor> leaves;
    for (auto& [n, t] : named) leaves.push_back(t);
    std::vector<int64_t> ids(20);
    for (size_t i = 0; i < ids.size(); ++i)
      ids[i] = static_cast<int64_t>(rng.next_below(7));
    Rng proj = rng.fork(34);
    s.run("cnn_extract_full", std::span<Tensor>(leaves), [&]() mutable {
      Rng p = proj;
      return project(cx.forward(ids, 1), p);
    });
  }
  {
    const AigGraph g = small_graph();
    const AigGraph graphs[] = {g};
    BatchedGraph batch = batch_graphs(graphs);
    Tensor h = Tensor::uniform({batch.n_nodes, 3}, -1, 1, rng, true);
    Tensor w = Tensor::uniform({3, 4}, -1, 1, rng, true);
    Tensor leaves[] = {h, w};
    Rng proj = rng.fork(35);
    s.run("gcn_layer", leaves, [&]() mutable {
      Rng p = proj;
      return project(gcn_layer(h, batch, w), p);
    });
    s.run("sage_layer", leaves, [&]() mutable {
      Rng p = proj;
      return project(sage_layer(h, batch, w), p);
    });
    Rng init = rng.fork(36);
    GatHeadParams head;
    head.w = Tensor::uniform({3, 4}, -0.5, 0.5, init, true);
    head.attn = Tensor::uniform({8, 1}, -0.5, 0.5, init, true);
    Tensor gat_leaves[] = {h, head.w, head.attn};
    s.run("gat_layer", gat_leaves, [&]() mutable {
      Rng p = proj;
      const GatHeadParams heads[] = {head};
      return project(gat_layer(h, batch, heads, false, 0.2), p);
    });
    s.run("readout", leaves, [&]() mutable {
      Rng p = proj;
      return project(readout_max_mean(h, batch), p);
    });
  }
  for (GnnKind kind : {GnnKind::Gcn, GnnKind::Gat, GnnKind::Sage}) {
    Rng init = rng.fork(37 + static_cast<uint64_t>(kind));
    GnnConfig cfg;
    cfg.kind = kind;
    cfg.layer1_width = 8;
    cfg.layer2_width = 8;
    GraphExtractor gx(cfg, init);
    NamedParams named;
    gx.collect_params(named);
    jitter_batchnorm(named, init);
    std::vector<Tensor> leaves;
    for (auto& [n, t] : named) leaves.push_back(t);
    const AigGraph g1 = small_graph();
    const AigGraph g2 = tiny_graph();
    const AigGraph graphs[] = {g1, g2};
    BatchedGraph batch = batch_graphs(graphs);
    Rng proj = rng.fork(41 + static_cast<uint64_t>(kind));
    s.run("graph_extract_" + to_string(kind), std::span<Tensor>(leaves),
          [&]() mutable {
            Rng p = proj;
            return project(gx.forward(batch, Mode::Train), p);
          });
  }
  {
    const struct {
      SeqKind seq;
      GnnKind gnn;
    } pairs[] = {{SeqKind::Transformer, GnnKind::Sage},
                 {SeqKind::Lstm, GnnKind::Gcn},
                 {SeqKind::Cnn, GnnKind::Gat}};
    for (const auto& pr : pairs) {
      RunConfig cfg;
      cfg.seq_extractor = pr.seq;
      cfg.graph_extractor = pr.gnn;
      cfg.dropout = 0.2;
      cfg.seed = rng.next_u64();
      ModelDims dims;
      dims.transformer = {.seq_len = 5, .d_model = 4, .heads = 2,
                          .ff_width = 8, .blocks = 1, .out_width = 6};
      dims.lstm = {.seq_len = 5, .embed_width = 3, .hidden_width = 4, .layers = 2};
      dims.cnn = {.seq_len = 5, .embed_width = 3, .kernels = {7, 9}, .stride = 2};
      dims.gnn.layer1_width = 8;
      dims.gnn.layer2_width = 8;
      dims.head_h1 = 16;
      dims.head_h2 = 8;
      dims.head_h3 = 8;
      JointModel model(cfg, dims);
      NamedParams named = model.named_params();
      Rng jitter_rng = rng.fork(60 + static_cast<uint64_t>(pr.seq));
      jitter_batchnorm(named, jitter_rng);
      std::vector<Tensor> leaves;
      for (auto& [n, t] : named) leaves.push_back(t);
      const AigGraph g1 = tiny_graph();
      const AigGraph g2 = small_graph();
      const AigGraph graphs[] = {g1, g2};
      BatchedGraph batch = batch_graphs(graphs);
      const std::vector<int64_t> ids = {2, 4, 0, 6, 1, 3, 3, 5, 2, 0};
      Rng proj = rng.fork(50 + static_cast<uint64_t>(pr.seq));
      s.run("joint_" + to_string(pr.seq) + "_" + to_string(pr.gnn),
            std::span<Tensor>(leaves),
            [&]() mutable {
              Rng p = proj;
              Rng drop(9);
              return project(model.forward(batch, ids, 2, Mode::Train, drop), p);
            },
            /*max_coords=*/16);
    }
  }
  return s.report;
}

std::string format_report(const GradCheckReport& report) {
  std::ostringstream os;
  for (const auto& e : report.entries) {
    os << (e.pass ? "PASS" : "FAIL") << "  ";
    os.width(32);
    os << std::left << e.name;
    os << "  max_rel_err=" << e.max_rel_err << "\n";
  }
  os << (report.all_pass() ? "OK" : "FAILED") << ": " << report.entries.size()
     << " checks, worst relative error " << report.worst() << " (tolerance "
     << report.tolerance << ")\n";
  return os.str();
}

}  // namespace qor

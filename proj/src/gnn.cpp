// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0

#include "qor/gnn.hpp"

#include <cmath>

namespace qor {

namespace {

Tensor init_linear(Shape shape, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(std::move(shape), -bound, bound, rng, true);
}

void check_node_width(const Tensor& h, const BatchedGraph& g, const char* who) {
  if (h.rank() != 2 || h.dim(0) != g.n_nodes)
    throw ShapeError(std::string(who) + ": features " + shape_str(h.shape()) +
                     " do not cover " + std::to_string(g.n_nodes) + " nodes");
}

// Gather per-message source rows, scale by fixed per-message coefficients,
// and sum into sink nodes.
Tensor aggregate_fixed(const Tensor& h, const BatchedGraph& g,
                       std::vector<double> coefs) {
  Tensor src_rows = gather_rows(h, g.msg_src);
  const int64_t n_msgs = static_cast<int64_t>(coefs.size());
  Tensor weights = Tensor::from({n_msgs}, std::move(coefs));
  Tensor scaled = scale_rows(src_rows, weights);
  return segment_reduce(scaled, g.msg_dst, g.n_nodes, Reduce::Sum);
}

}  // namespace

Tensor node_input_embed(const BatchedGraph& g, const Tensor& type_table) {
  std::vector<int64_t> type_ids(static_cast<size_t>(g.n_nodes));
  std::vector<double> counts(static_cast<size_t>(g.n_nodes));
  for (int64_t v = 0; v < g.n_nodes; ++v) {
    type_ids[static_cast<size_t>(v)] =
        static_cast<int64_t>(g.types[static_cast<size_t>(v)]);
    counts[static_cast<size_t>(v)] =
        static_cast<double>(g.inverted_inputs[static_cast<size_t>(v)]);
  }
  Tensor emb = gather_rows(type_table, type_ids);
  Tensor inv = Tensor::from({g.n_nodes, 1}, std::move(counts));
  const Tensor parts[] = {emb, inv};
  return concat_last(parts);
}

Tensor gcn_layer(const Tensor& h, const BatchedGraph& g, const Tensor& w) {
  check_node_width(h, g, "gcn_layer");
  std::vector<double> coefs(g.msg_src.size());
  for (size_t m = 0; m < g.msg_src.size(); ++m) {
    const double d_src =
        static_cast<double>(g.in_degree[static_cast<size_t>(g.msg_src[m])] + 1);
    const double d_dst =
        static_cast<double>(g.in_degree[static_cast<size_t>(g.msg_dst[m])] + 1);
    coefs[m] = 1.0 / std::sqrt(d_src * d_dst);
  }
  return matmul(aggregate_fixed(h, g, std::move(coefs)), w);
}

Tensor sage_layer(const Tensor& h, const BatchedGraph& g, const Tensor& w) {
  check_node_width(h, g, "sage_layer");
  Tensor src_rows = gather_rows(h, g.msg_src);
  Tensor mean = segment_reduce(src_rows, g.msg_dst, g.n_nodes, Reduce::Mean);
  return relu(matmul(mean, w));
}

Tensor gat_scores(const Tensor& h, const BatchedGraph& g,
                  const GatHeadParams& head, double leaky_slope) {
  check_node_width(h, g, "gat_scores");
  const int64_t d_out = head.w.dim(1);
  Tensor wh = matmul(h, head.w);  // [N, d_out]
  // attn is [2*d_out, 1]; split into target and source halves.
  Tensor attn_flat = reshape(head.attn, {2 * d_out});
  Tensor a_target = reshape(slice_last(attn_flat, 0, d_out), {d_out, 1});
  Tensor a_source = reshape(slice_last(attn_flat, d_out, d_out), {d_out, 1});
  Tensor s_target = matmul(wh, a_target);  // [N, 1]
  Tensor s_source = matmul(wh, a_source);  // [N, 1]
  Tensor e = leaky_relu(
      add(gather_rows(s_target, g.msg_dst), gather_rows(s_source, g.msg_src)),
      leaky_slope);
  return segment_softmax(e, g.msg_dst, g.n_nodes);
}

Tensor gat_layer(const Tensor& h, const BatchedGraph& g,
                 std::span<const GatHeadParams> heads, bool average_heads,
                 double leaky_slope) {
  check_node_width(h, g, "gat_layer");
  std::vector<Tensor> outs;
  outs.reserve(heads.size());
  for (const auto& head : heads) {
    Tensor wh = matmul(h, head.w);
    Tensor alpha = gat_scores(h, g, head, leaky_slope);
    Tensor msgs = scale_rows(gather_rows(wh, g.msg_src), alpha);
    Tensor agg = segment_reduce(msgs, g.msg_dst, g.n_nodes, Reduce::Sum);
    outs.push_back(elu(agg));
  }
  if (!average_heads) return concat_last(outs);
  Tensor acc = outs[0];
  for (size_t i = 1; i < outs.size(); ++i) acc = add(acc, outs[i]);
  return scale(acc, 1.0 / static_cast<double>(outs.size()));
}

Tensor readout_max_mean(const Tensor& h, const BatchedGraph& g) {
  check_node_width(h, g, "readout");
  Tensor mx = segment_reduce(h, g.graph_ids, g.n_graphs, Reduce::Max);
  Tensor mean = segment_reduce(h, g.graph_ids, g.n_graphs, Reduce::Mean);
  const Tensor parts[] = {mx, mean};
  return concat_last(parts);
}

GraphExtractor::GraphExtractor(const GnnConfig& cfg, Rng& rng)
    : cfg_(cfg),
      bn1_(cfg.layer1_width),
      bn2_(cfg.layer2_width) {
  type_table_ = Tensor::uniform({3, cfg_.type_embed_width}, -1.0, 1.0, rng, true);
  const int64_t in = cfg_.input_width();
  if (cfg_.kind == GnnKind::Gat) {
    if (cfg_.layer1_width % cfg_.gat_heads != 0)
      throw ValueError("gat: layer1 width " + std::to_string(cfg_.layer1_width) +
                       " not divisible by " + std::to_string(cfg_.gat_heads) +
                       " heads");
    const int64_t w1_head = cfg_.layer1_width / cfg_.gat_heads;
    for (int64_t hd = 0; hd < cfg_.gat_heads; ++hd) {
      GatHeadParams head;
      head.w = init_linear({in, w1_head}, in, rng);
      head.attn = init_linear({2 * w1_head, 1}, 2 * w1_head, rng);
      gat1_.push_back(std::move(head));
    }
    for (int64_t hd = 0; hd < cfg_.gat_heads; ++hd) {
      GatHeadParams head;
      head.w = init_linear({cfg_.layer1_width, cfg_.layer2_width},
                           cfg_.layer1_width, rng);
      head.attn = init_linear({2 * cfg_.layer2_width, 1}, 2 * cfg_.layer2_width, rng);
      gat2_.push_back(std::move(head));
    }
  } else {
    w1_ = init_linear({in, cfg_.layer1_width}, in, rng);
    w2_ = init_linear({cfg_.layer1_width, cfg_.layer2_width}, cfg_.layer1_width,
                      rng);
  }
}

Tensor GraphExtractor::forward(const BatchedGraph& g, Mode mode) {
  Tensor x = node_input_embed(g, type_table_);
  Tensor l1;
  switch (cfg_.kind) {
    case GnnKind::Gcn: l1 = gcn_layer(x, g, w1_); break;
    case GnnKind::Sage: l1 = sage_layer(x, g, w1_); break;
    case GnnKind::Gat:
      l1 = gat_layer(x, g, gat1_, /*average_heads=*/false, cfg_.leaky_slope);
      break;
  }
  const Act act = cfg_.kind == GnnKind::Gat ? Act::Elu : Act::Relu;
  Tensor h1 = activation(batch_norm(l1, bn1_, mode), act);
  Tensor l2;
  switch (cfg_.kind) {
    case GnnKind::Gcn: l2 = gcn_layer(h1, g, w2_); break;
    case GnnKind::Sage: l2 = sage_layer(h1, g, w2_); break;
    case GnnKind::Gat:
      l2 = gat_layer(h1, g, gat2_, /*average_heads=*/true, cfg_.leaky_slope);
      break;
  }
  Tensor h2 = activation(batch_norm(l2, bn2_, mode), act);
  return readout_max_mean(h2, g);
}

void GraphExtractor::collect_params(NamedParams& out) const {
  out.emplace_back("gnn.type_table", type_table_);
  if (cfg_.kind == GnnKind::Gat) {
    for (size_t i = 0; i < gat1_.size(); ++i) {
      out.emplace_back("gnn.layer1.head" + std::to_string(i) + ".w", gat1_[i].w);
      out.emplace_back("gnn.layer1.head" + std::to_string(i) + ".attn",
                       gat1_[i].attn);
    }
    for (size_t i = 0; i < gat2_.size(); ++i) {
      out.emplace_back("gnn.layer2.head" + std::to_string(i) + ".w", gat2_[i].w);
      out.emplace_back("gnn.layer2.head" + std::to_string(i) + ".attn",
                       gat2_[i].attn);
    }
  } else {
    out.emplace_back("gnn.layer1.w", w1_);
    out.emplace_back("gnn.layer2.w", w2_);
  }
  out.emplace_back("gnn.bn1.gamma", bn1_.gamma);
  out.emplace_back("gnn.bn1.beta", bn1_.beta);
  out.emplace_back("gnn.bn2.gamma", bn2_.gamma);
  out.emplace_back("gnn.bn2.beta", bn2_.beta);
}

std::vector<std::pair<std::string, std::vector<double>*>> GraphExtractor::buffers() {
  return {{"gnn.bn1.running_mean", &bn1_.running_mean},
          {"gnn.bn1.running_var", &bn1_.running_var},
          {"gnn.bn2.running_mean", &bn2_.running_mean},
          {"gnn.bn2.running_var", &bn2_.running_var}};
}

}  // namespace qor

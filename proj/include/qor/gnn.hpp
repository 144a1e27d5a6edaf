// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// Circuit feature extractors: two message-passing layers (GCN, GAT or
// GraphSage flavored) with batch normalization, followed by a concatenated
// global max + mean readout. Messages flow along stored driver -> sink edges
// into each node's in-neighborhood plus a self-loop.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qor/aig.hpp"
#include "qor/extractors.hpp"
#include "qor/rng.hpp"
#include "qor/tensor.hpp"

namespace qor {

enum class GnnKind { Gcn, Gat, Sage };

struct GnnConfig {
  GnnKind kind = GnnKind::Gcn;
  int64_t type_embed_width = 3;
  int64_t layer1_width = 64;  // GAT: split across heads and concatenated
  int64_t layer2_width = 64;  // GAT: per-head width, heads averaged
  int64_t gat_heads = 2;
  double leaky_slope = 0.2;
  bool symmetrize_edges = false;

  int64_t input_width() const { return type_embed_width + 1; }
  int64_t output_width() const { return 2 * layer2_width; }
};

// Per-node input: learned type embedding concatenated with the raw
// inverted-input count, [N, type_embed_width + 1].
Tensor node_input_embed(const BatchedGraph& g, const Tensor& type_table);

// h'_i = sum over j in in(i) u {i} of (d_i d_j)^(-1/2) h_j W with
// d_v = in-degree(v) + 1. No activation; the caller applies BN and the
// nonlinearity.
Tensor gcn_layer(const Tensor& h, const BatchedGraph& g, const Tensor& w);

// h'_v = relu(W . mean over {h_v} u {h_u : u in in(v)}).
Tensor sage_layer(const Tensor& h, const BatchedGraph& g, const Tensor& w);

struct GatHeadParams {
  Tensor w;     // [d_in, d_out]
  Tensor attn;  // [2 * d_out, 1]; first half scores the target, second the source
};

// Attention coefficient per message, softmax-normalized over each node's
// in-neighborhood (self-loop included); shape [M, 1] in message order.
Tensor gat_scores(const Tensor& h, const BatchedGraph& g,
                  const GatHeadParams& head, double leaky_slope);

// Per head: elu(sum_j alpha_ij W h_j); heads are concatenated when
// average_heads is false and averaged otherwise.
Tensor gat_layer(const Tensor& h, const BatchedGraph& g,
                 std::span<const GatHeadParams> heads, bool average_heads,
                 double leaky_slope);

// Per graph: concat(elementwise max over its nodes, elementwise mean),
// [n_graphs, 2 * width].
Tensor readout_max_mean(const Tensor& h, const BatchedGraph& g);

class GraphExtractor {
 public:
  GraphExtractor(const GnnConfig& cfg, Rng& rng);

  // [n_graphs, output_width]. Train mode updates BN running statistics.
  Tensor forward(const BatchedGraph& g, Mode mode);

  void collect_params(NamedParams& out) const;
  // Non-trainable state (BN running statistics) for bundle save/load.
  std::vector<std::pair<std::string, std::vector<double>*>> buffers();

  const GnnConfig& config() const { return cfg_; }
  int64_t output_width() const { return cfg_.output_width(); }
  const Tensor& type_table() const { return type_table_; }

 private:
  GnnConfig cfg_;
  Tensor type_table_;  // [3, type_embed_width]
  Tensor w1_, w2_;     // gcn / sage
  std::vector<GatHeadParams> gat1_, gat2_;
  BatchNorm bn1_, bn2_;
};

}  // namespace qor

// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// And-inverter graph data model. Nodes are typed (primary input / primary
// output / two-input AND) and carry the number of inverted fan-ins; edges
// are stored driver -> sink. Graphs are immutable once loaded and safe to
// share read-only across threads.
#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qor/errors.hpp"

namespace qor {

enum class NodeType : uint8_t { PrimaryInput = 0, PrimaryOutput = 1, AndGate = 2 };

struct AigGraph {
  std::vector<NodeType> types;
  std::vector<int32_t> inverted_inputs;
  std::vector<std::pair<int32_t, int32_t>> edges;  // driver -> sink

  int64_t node_count() const { return static_cast<int64_t>(types.size()); }
  int64_t edge_count() const { return static_cast<int64_t>(edges.size()); }
  int64_t count_of(NodeType t) const;
  int64_t and_count() const { return count_of(NodeType::AndGate); }
};

// Text format, one graph per file:
//   aig <N> <E>
//   node <id> <type:0|1|2> <n_inverted_inputs>   (N lines, ids dense 0..N-1)
//   edge <src> <dst>                             (E lines)
// '#' starts a comment; blank lines are ignored; anything else is rejected.
AigGraph load_graph(const std::filesystem::path& path);
AigGraph parse_graph(std::istream& in, const std::string& origin);
void save_graph(const AigGraph& g, const std::filesystem::path& path);

// Throws ValidationError naming the offending node or edge. Checks: at least
// one node, edge endpoints in range, acyclicity, in-degree by type (PI 0,
// AND 2, PO 1), and inverted-input count within in-degree.
void validate_graph(const AigGraph& g);

std::vector<int64_t> in_degrees(const AigGraph& g);

// Longest path length, in edges.
int64_t graph_depth(const AigGraph& g);

// Feature matrix F [N x 2]: column 0 node-type code, column 1 inverted-input
// count. Row-major integers.
std::vector<int64_t> build_features(const AigGraph& g);

// One propagation step X = A * F with A[i][j] = 1 iff edge i -> j. Exact in
// integers (returned as doubles); a reference helper, not used in training.
std::vector<double> propagate_once(const AigGraph& g);

// Block-diagonal composition of several graphs plus the message index used
// by the graph extractors: for every node, its stored in-edges (in edge
// order) followed by one self-loop, grouped contiguously per sink node.
struct BatchedGraph {
  int64_t n_graphs = 0;
  int64_t n_nodes = 0;
  std::vector<NodeType> types;
  std::vector<int32_t> inverted_inputs;
  std::vector<int64_t> graph_ids;    // per node, block-wise sorted
  std::vector<int64_t> node_counts;  // per graph
  std::vector<std::pair<int64_t, int64_t>> edges;  // offset-shifted
  std::vector<int64_t> edge_counts;  // per graph

  std::vector<int64_t> msg_src;      // per message, source node
  std::vector<int64_t> msg_dst;      // per message, sink node
  std::vector<int64_t> msg_offsets;  // per node, [start, end) into msg_src
  std::vector<int64_t> in_degree;    // stored in-edges per node (no self-loop)
};

// With symmetrize_edges, each stored edge also contributes a reversed
// message (the self-loop is still added once).
BatchedGraph batch_graphs(std::span<const AigGraph> graphs,
                          bool symmetrize_edges = false);

// Inverse of batch_graphs; recovers the original graphs exactly.
std::vector<AigGraph> unbatch_graphs(const BatchedGraph& batch);

}  // namespace qor

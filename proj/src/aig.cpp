// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0

#include "qor/aig.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace qor {

namespace {

int64_t parse_int(std::string_view tok, int line_no, const char* what,
                  const std::string& origin) {
  int64_t value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError(origin + ":" + std::to_string(line_no) + ": bad " + what +
                     " '" + std::string(tok) + "'");
  return value;
}

std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> toks;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r'))
      ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r')
      ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

}  // namespace

int64_t AigGraph::count_of(NodeType t) const {
  int64_t n = 0;
  for (NodeType x : types) n += x == t;
  return n;
}

AigGraph parse_graph(std::istream& in, const std::string& origin) {
  AigGraph g;
  std::string raw;
  int line_no = 0;
  int64_t expect_nodes = -1, expect_edges = -1;
  int64_t nodes_seen = 0, edges_seen = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line{raw};
    if (auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    auto toks = split_tokens(line);
    if (toks.empty()) continue;

    if (expect_nodes < 0) {
      if (toks[0] != "aig" || toks.size() != 3)
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": expected header 'aig <N> <E>'");
      expect_nodes = parse_int(toks[1], line_no, "node count", origin);
      expect_edges = parse_int(toks[2], line_no, "edge count", origin);
      if (expect_nodes < 0 || expect_edges < 0)
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": negative count in header");
      g.types.reserve(static_cast<size_t>(expect_nodes));
      g.edges.reserve(static_cast<size_t>(expect_edges));
      continue;
    }
    if (nodes_seen < expect_nodes) {
      if (toks[0] != "node" || toks.size() != 4)
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": expected 'node <id> <type> <n_inverted_inputs>'");
      const int64_t id = parse_int(toks[1], line_no, "node id", origin);
      const int64_t type = parse_int(toks[2], line_no, "node type", origin);
      const int64_t ninv = parse_int(toks[3], line_no, "inverted-input count", origin);
      if (id != nodes_seen)
        throw ParseError(origin + ":" + std::to_string(line_no) + ": node id " +
                         std::to_string(id) + " out of order, expected " +
                         std::to_string(nodes_seen) + " (ids must be dense 0..N-1)");
      if (type < 0 || type > 2)
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": node type must be 0, 1 or 2, got " + std::to_string(type));
      if (ninv < 0)
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": negative inverted-input count");
      g.types.push_back(static_cast<NodeType>(type));
      g.inverted_inputs.push_back(static_cast<int32_t>(ninv));
      ++nodes_seen;
      continue;
    }
    if (edges_seen < expect_edges) {
      if (toks[0] != "edge" || toks.size() != 3)
        throw ParseError(origin + ":" + std::to_string(line_no) +
                         ": expected 'edge <src> <dst>'");
      const int64_t src = parse_int(toks[1], line_no, "edge source", origin);
      const int64_t dst = parse_int(toks[2], line_no, "edge target", origin);
      g.edges.emplace_back(static_cast<int32_t>(src), static_cast<int32_t>(dst));
      ++edges_seen;
      continue;
    }
    throw ParseError(origin + ":" + std::to_string(line_no) +
                     ": trailing garbage after declared nodes and edges");
  }
  if (expect_nodes < 0)
    throw ParseError(origin + ": missing 'aig <N> <E>' header");
  if (nodes_seen < expect_nodes || edges_seen < expect_edges)
    throw ParseError(origin + ": truncated file, declared " +
                     std::to_string(expect_nodes) + " nodes / " +
                     std::to_string(expect_edges) + " edges but found " +
                     std::to_string(nodes_seen) + " / " + std::to_string(edges_seen));
  validate_graph(g);
  return g;
}

AigGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file " + path.string());
  return parse_graph(in, path.filename().string());
}

void save_graph(const AigGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary: stable newlines
  if (!out) throw Error("cannot write graph file " + path.string());
  out << "aig " << g.node_count() << " " << g.edge_count() << "\n";
  for (int64_t i = 0; i < g.node_count(); ++i)
    out << "node " << i << " " << static_cast<int>(g.types[static_cast<size_t>(i)])
        << " " << g.inverted_inputs[static_cast<size_t>(i)] << "\n";
  for (const auto& [src, dst] : g.edges) out << "edge " << src << " " << dst << "\n";
  if (!out) throw Error("write failed for graph file " + path.string());
}

std::vector<int64_t> in_degrees(const AigGraph& g) {
  std::vector<int64_t> deg(static_cast<size_t>(g.node_count()), 0);
  for (const auto& [src, dst] : g.edges) ++deg[static_cast<size_t>(dst)];
  return deg;
}

void validate_graph(const AigGraph& g) {
  const int64_t n = g.node_count();
  if (n == 0) throw ValidationError("graph has no nodes");
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const auto& [src, dst] = g.edges[e];
    if (src < 0 || src >= n || dst < 0 || dst >= n)
      throw ValidationError("edge " + std::to_string(e) + " (" +
                            std::to_string(src) + " -> " + std::to_string(dst) +
                            ") leaves the node range [0, " + std::to_string(n) + ")");
  }
  auto deg = in_degrees(g);
  for (int64_t v = 0; v < n; ++v) {
    const auto t = g.types[static_cast<size_t>(v)];
    const int64_t d = deg[static_cast<size_t>(v)];
    if (t == NodeType::PrimaryInput && d != 0)
      throw ValidationError("node " + std::to_string(v) +
                            ": primary input has in-degree " + std::to_string(d));
    if (t == NodeType::AndGate && d != 2)
      throw ValidationError("node " + std::to_string(v) +
                            ": AND gate has in-degree " + std::to_string(d) +
                            ", expected 2");
    if (t == NodeType::PrimaryOutput && d != 1)
      throw ValidationError("node " + std::to_string(v) +
                            ": primary output has in-degree " + std::to_string(d) +
                            ", expected 1");
    if (g.inverted_inputs[static_cast<size_t>(v)] > d)
      throw ValidationError("node " + std::to_string(v) + ": " +
                            std::to_string(g.inverted_inputs[static_cast<size_t>(v)]) +
                            " inverted inputs exceed in-degree " + std::to_string(d));
  }
  // Kahn's algorithm; leftover nodes sit on a cycle.
  std::vector<int64_t> pending = deg;
  std::vector<int64_t> ready;
  for (int64_t v = 0; v < n; ++v)
    if (pending[static_cast<size_t>(v)] == 0) ready.push_back(v);
  std::vector<std::vector<int64_t>> out_adj(static_cast<size_t>(n));
  for (const auto& [src, dst] : g.edges)
    out_adj[static_cast<size_t>(src)].push_back(dst);
  int64_t processed = 0;
  while (!ready.empty()) {
    const int64_t v = ready.back();
    ready.pop_back();
    ++processed;
    for (int64_t w : out_adj[static_cast<size_t>(v)])
      if (--pending[static_cast<size_t>(w)] == 0) ready.push_back(w);
  }
  if (processed < n)
    for (int64_t v = 0; v < n; ++v)
      if (pending[static_cast<size_t>(v)] > 0)
        throw ValidationError("cycle detected through node " + std::to_string(v));
}

int64_t graph_depth(const AigGraph& g) {
  const int64_t n = g.node_count();
  auto deg = in_degrees(g);
  std::vector<std::vector<int64_t>> out_adj(static_cast<size_t>(n));
  for (const auto& [src, dst] : g.edges)
    out_adj[static_cast<size_t>(src)].push_back(dst);
  std::vector<int64_t> depth(static_cast<size_t>(n), 0);
  std::vector<int64_t> ready;
  for (int64_t v = 0; v < n; ++v)
    if (deg[static_cast<size_t>(v)] == 0) ready.push_back(v);
  int64_t best = 0;
  while (!ready.empty()) {
    const int64_t v = ready.back();
    ready.pop_back();
    best = std::max(best, depth[static_cast<size_t>(v)]);
    for (int64_t w : out_adj[static_cast<size_t>(v)]) {
      depth[static_cast<size_t>(w)] =
          std::max(depth[static_cast<size_t>(w)], depth[static_cast<size_t>(v)] + 1);
      if (--deg[static_cast<size_t>(w)] == 0) ready.push_back(w);
    }
  }
  return best;
}

std::vector<int64_t> build_features(const AigGraph& g) {
  std::vector<int64_t> f(static_cast<size_t>(g.node_count() * 2));
  for (int64_t v = 0; v < g.node_count(); ++v) {
    f[static_cast<size_t>(2 * v)] = static_cast<int64_t>(g.types[static_cast<size_t>(v)]);
    f[static_cast<size_t>(2 * v + 1)] = g.inverted_inputs[static_cast<size_t>(v)];
  }
  return f;
}

std::vector<double> propagate_once(const AigGraph& g) {
  auto f = build_features(g);
  std::vector<double> x(static_cast<size_t>(g.node_count() * 2), 0.0);
  for (const auto& [src, dst] : g.edges) {
    x[static_cast<size_t>(2 * src)] += static_cast<double>(f[static_cast<size_t>(2 * dst)]);
    x[static_cast<size_t>(2 * src + 1)] +=
        static_cast<double>(f[static_cast<size_t>(2 * dst + 1)]);
  }
  return x;
}

BatchedGraph batch_graphs(std::span<const AigGraph> graphs, bool symmetrize_edges) {
  if (graphs.empty()) throw ValueError("batch_graphs: empty graph list");
  BatchedGraph b;
  b.n_graphs = static_cast<int64_t>(graphs.size());
  int64_t offset = 0;
  for (size_t gi = 0; gi < graphs.size(); ++gi) {
    const AigGraph& g = graphs[gi];
    b.node_counts.push_back(g.node_count());
    b.edge_counts.push_back(g.edge_count());
    for (int64_t v = 0; v < g.node_count(); ++v) {
      b.types.push_back(g.types[static_cast<size_t>(v)]);
      b.inverted_inputs.push_back(g.inverted_inputs[static_cast<size_t>(v)]);
      b.graph_ids.push_back(static_cast<int64_t>(gi));
    }
    for (const auto& [src, dst] : g.edges)
      b.edges.emplace_back(src + offset, dst + offset);
    offset += g.node_count();
  }
  b.n_nodes = offset;

  b.in_degree.assign(static_cast<size_t>(b.n_nodes), 0);
  std::vector<std::pair<int64_t, int64_t>> msgs;  // (src, dst)
  msgs.reserve(b.edges.size() * (symmetrize_edges ? 2 : 1) +
               static_cast<size_t>(b.n_nodes));
  for (const auto& [src, dst] : b.edges) {
    msgs.emplace_back(src, dst);
    ++b.in_degree[static_cast<size_t>(dst)];
    if (symmetrize_edges) {
      msgs.emplace_back(dst, src);
      ++b.in_degree[static_cast<size_t>(src)];
    }
  }

  // Group messages by sink, keeping edge order within a sink and appending
  // the self-loop last.
  std::vector<int64_t> count(static_cast<size_t>(b.n_nodes), 0);
  for (const auto& [src, dst] : msgs) ++count[static_cast<size_t>(dst)];
  b.msg_offsets.assign(static_cast<size_t>(b.n_nodes + 1), 0);
  for (int64_t v = 0; v < b.n_nodes; ++v)
    b.msg_offsets[static_cast<size_t>(v + 1)] =
        b.msg_offsets[static_cast<size_t>(v)] + count[static_cast<size_t>(v)] + 1;
  const int64_t total = b.msg_offsets.back();
  b.msg_src.assign(static_cast<size_t>(total), 0);
  b.msg_dst.assign(static_cast<size_t>(total), 0);
  std::vector<int64_t> fill(b.msg_offsets.begin(), b.msg_offsets.end() - 1);
  for (const auto& [src, dst] : msgs) {
    const int64_t pos = fill[static_cast<size_t>(dst)]++;
    b.msg_src[static_cast<size_t>(pos)] = src;
    b.msg_dst[static_cast<size_t>(pos)] = dst;
  }
  for (int64_t v = 0; v < b.n_nodes; ++v) {
    const int64_t pos = fill[static_cast<size_t>(v)]++;
    b.msg_src[static_cast<size_t>(pos)] = v;
    b.msg_dst[static_cast<size_t>(pos)] = v;
  }
  return b;
}

std::vector<AigGraph> unbatch_graphs(const BatchedGraph& batch) {
  std::vector<AigGraph> out(static_cast<size_t>(batch.n_graphs));
  std::vector<int64_t> starts(static_cast<size_t>(batch.n_graphs), 0);
  for (int64_t gi = 1; gi < batch.n_graphs; ++gi)
    starts[static_cast<size_t>(gi)] = starts[static_cast<size_t>(gi - 1)] +
                                      batch.node_counts[static_cast<size_t>(gi - 1)];
  for (int64_t gi = 0; gi < batch.n_graphs; ++gi) {
    AigGraph& g = out[static_cast<size_t>(gi)];
    const int64_t s = starts[static_cast<size_t>(gi)];
    const int64_t n = batch.node_counts[static_cast<size_t>(gi)];
    g.types.assign(batch.types.begin() + s, batch.types.begin() + s + n);
    g.inverted_inputs.assign(batch.inverted_inputs.begin() + s,
                             batch.inverted_inputs.begin() + s + n);
  }
  int64_t edge_pos = 0;
  for (int64_t gi = 0; gi < batch.n_graphs; ++gi) {
    const int64_t s = starts[static_cast<size_t>(gi)];
    for (int64_t e = 0; e < batch.edge_counts[static_cast<size_t>(gi)]; ++e) {
      const auto& [src, dst] = batch.edges[static_cast<size_t>(edge_pos++)];
      out[static_cast<size_t>(gi)].edges.emplace_back(
          static_cast<int32_t>(src - s), static_cast<int32_t>(dst - s));
    }
  }
  return out;
}

}  // namespace qor

// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic circuit/sequence/label generation for desk-scale training runs,
// plus an optional driver for a real synthesis tool.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "qor/aig.hpp"
#include "qor/rng.hpp"
#include "qor/vocab.hpp"

namespace qor {

struct SynthSpec {
  int64_t circuits = 10;
  int64_t nodes_min = 30;
  int64_t nodes_max = 80;
  int64_t sequences = 100;  // per circuit
  int64_t seq_len = 20;
  uint64_t seed = 0;
  double noise = 0.0;  // stddev of Gaussian label noise; 0 = deterministic

  void validate() const;
};

// Random DAG passing all graph invariants. Fixed composition:
// max(3, n/5) primary inputs, max(1, n/10) primary outputs, the rest AND
// gates with two distinct fan-ins drawn from earlier nodes. Requires
// n_target >= 7.
AigGraph gen_circuit(int64_t n_target, uint64_t seed);

// Deterministic stand-in for a synthesis run:
//   label = round(N_and * (1 - r)),
//   r = min(0.6, sum_t w[tok_t] * 0.98^t * (1 + 0.1 * ((depth + t) mod 3)))
// with per-token weights w = [0.005, 0.002, 0.006, 0.002, 0.006, 0.003,
// 0.004] (vocabulary id order) and depth the longest path length. The label
// depends on token identity, token position and graph structure, so both
// extractor families carry signal.
int64_t synthetic_qor(const AigGraph& g, std::span<const int64_t> seq);

// Same, plus Gaussian noise of the given amplitude (clamped at 0).
int64_t synthetic_qor_noisy(const AigGraph& g, std::span<const int64_t> seq,
                            double noise, Rng& rng);

// Writes <out_dir>/<circuit_id>.aig per circuit and <out_dir>/corpus.txt
// with circuits * sequences records. Byte-identical for a fixed spec.
// Returns the corpus path.
std::filesystem::path gen_corpus(const SynthSpec& spec,
                                 const std::filesystem::path& out_dir);

// Runs an external synthesis tool and parses the resulting node count from
// its output (first match of "and = <int>" or "nodes = <int>", last
// occurrence wins). The command template may use {tool}, {graph} and
// {commands}; commands render tool-style ("rewrite -z"), joined by "; ".
inline constexpr const char* kDefaultToolTemplate =
    "{tool} -q \"read {graph}; {commands}; print_stats\"";
int64_t run_external_synthesis(const std::string& tool_path,
                               const std::filesystem::path& graph_file,
                               std::span<const int64_t> seq,
                               const std::string& command_template =
                                   kDefaultToolTemplate);

}  // namespace qor

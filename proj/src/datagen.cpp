// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0

#include "qor/datagen.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include <sys/wait.h>

namespace qor {

namespace {

constexpr std::array<double, kVocabSize> kTokenWeights = {
    0.005,  // refactor
    0.002,  // refactor-z
    0.006,  // rewrite
    0.002,  // rewrite-z
    0.006,  // resub
    0.003,  // resub-z
    0.004,  // balance
};

// Sub-stream tags within a generation spec.
constexpr uint64_t kCircuitStream = 100;
constexpr uint64_t kSequenceStream = 200;
constexpr uint64_t kNoiseStream = 300;

}  // namespace

void SynthSpec::validate() const {
  if (circuits < 1) throw ValueError("gen: need at least one circuit");
  if (sequences < 1) throw ValueError("gen: need at least one sequence per circuit");
  if (nodes_min < 7)
    throw ValueError("gen: node-count range must start at 7 or more, got " +
                     std::to_string(nodes_min));
  if (nodes_max < nodes_min)
    throw ValueError("gen: empty node-count range [" + std::to_string(nodes_min) +
                     ", " + std::to_string(nodes_max) + "]");
  if (seq_len < 1) throw ValueError("gen: sequence length must be >= 1");
  if (noise < 0) throw ValueError("gen: noise amplitude must be >= 0");
}

AigGraph gen_circuit(int64_t n_target, uint64_t seed) {
  if (n_target < 7)
    throw ValueError("gen_circuit: need at least 7 nodes, got " +
                     std::to_string(n_target));
  Rng rng(seed);
  const int64_t n_pi = std::max<int64_t>(3, n_target / 5);
  const int64_t n_po = std::max<int64_t>(1, n_target / 10);
  const int64_t n_and = n_target - n_pi - n_po;

  AigGraph g;
  g.types.assign(static_cast<size_t>(n_target), NodeType::PrimaryInput);
  g.inverted_inputs.assign(static_cast<size_t>(n_target), 0);
  for (int64_t v = n_pi; v < n_pi + n_and; ++v) {
    g.types[static_cast<size_t>(v)] = NodeType::AndGate;
    const uint64_t pool = static_cast<uint64_t>(v);  // any earlier node
    const int64_t a = static_cast<int64_t>(rng.next_below(pool));
    int64_t b = static_cast<int64_t>(rng.next_below(pool - 1));
    if (b >= a) ++b;  // distinct fan-ins
    g.edges.emplace_back(static_cast<int32_t>(a), static_cast<int32_t>(v));
    g.edges.emplace_back(static_cast<int32_t>(b), static_cast<int32_t>(v));
    g.inverted_inputs[static_cast<size_t>(v)] =
        static_cast<int32_t>(rng.next_below(3));
  }
  for (int64_t v = n_pi + n_and; v < n_target; ++v) {
    g.types[static_cast<size_t>(v)] = NodeType::PrimaryOutput;
    const int64_t driver = n_pi + static_cast<int64_t>(rng.next_below(
                                      static_cast<uint64_t>(n_and)));
    g.edges.emplace_back(static_cast<int32_t>(driver), static_cast<int32_t>(v));
    g.inverted_inputs[static_cast<size_t>(v)] =
        static_cast<int32_t>(rng.next_below(2));
  }
  validate_graph(g);
  return g;
}

namespace {
double reduction_fraction(const AigGraph& g, std::span<const int64_t> seq) {
  const int64_t depth = graph_depth(g);
  double sum = 0.0;
  double decay = 1.0;
  for (size_t t = 0; t < seq.size(); ++t) {
    const int64_t tok = seq[t];
    if (tok < 0 || tok >= kVocabSize)
      throw IndexError("synthetic_qor: token id " + std::to_string(tok) +
                       " at position " + std::to_string(t) + " outside [0, 7)");
    const double phase =
        1.0 + 0.1 * static_cast<double>((depth + static_cast<int64_t>(t)) % 3);
    sum += kTokenWeights[static_cast<size_t>(tok)] * decay * phase;
    decay *= 0.98;
  }
  return std::min(0.6, sum);
}
}  // namespace

int64_t synthetic_qor(const AigGraph& g, std::span<const int64_t> seq) {
  const double r = reduction_fraction(g, seq);
  return std::llround(static_cast<double>(g.and_count()) * (1.0 - r));
}

int64_t synthetic_qor_noisy(const AigGraph& g, std::span<const int64_t> seq,
                            double noise, Rng& rng) {
  const double r = reduction_fraction(g, seq);
  double label = static_cast<double>(g.and_count()) * (1.0 - r);
  if (noise > 0) label += noise * rng.normal();
  return std::max<int64_t>(0, std::llround(label));
}

std::filesystem::path gen_corpus(const SynthSpec& spec,
                                 const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec && !std::filesystem::is_directory(out_dir))
    throw Error("cannot create output directory " + out_dir.string());

  Rng master(spec.seed);
  const int width = spec.circuits > 1000 ? 6 : 4;
  const auto corpus_path = out_dir / "corpus.txt";
  std::ofstream corpus(corpus_path, std::ios::binary);
  if (!corpus) throw Error("cannot write corpus file " + corpus_path.string());

  for (int64_t c = 0; c < spec.circuits; ++c) {
    const int64_t span = spec.nodes_max - spec.nodes_min + 1;
    const int64_t n_target =
        spec.nodes_min + static_cast<int64_t>(master.next_below(
                             static_cast<uint64_t>(span)));
    const uint64_t circuit_seed =
        master.fork(kCircuitStream + static_cast<uint64_t>(c)).next_u64();
    AigGraph g = gen_circuit(n_target, circuit_seed);

    std::ostringstream id;
    id << "c";
    id.width(width);
    id.fill('0');
    id << c;
    save_graph(g, out_dir / (id.str() + ".aig"));

    Rng seq_rng = master.fork(kSequenceStream + static_cast<uint64_t>(c));
    Rng noise_rng = master.fork(kNoiseStream + static_cast<uint64_t>(c));
    for (int64_t s = 0; s < spec.sequences; ++s) {
      CorpusRecord rec;
      rec.circuit_id = id.str();
      rec.tokens.reserve(static_cast<size_t>(spec.seq_len));
      for (int64_t t = 0; t < spec.seq_len; ++t)
        rec.tokens.push_back(static_cast<int64_t>(
            seq_rng.next_below(static_cast<uint64_t>(kVocabSize))));
      rec.label = spec.noise > 0
                      ? synthetic_qor_noisy(g, rec.tokens, spec.noise, noise_rng)
                      : synthetic_qor(g, rec.tokens);
      corpus << format_corpus_line(rec) << "\n";
    }
  }
  if (!corpus) throw Error("write failed for corpus file " + corpus_path.string());
  return corpus_path;
}

// ---- external tool ---------------------------------------------------------------

namespace {
std::string substitute(std::string text, const std::string& key,
                       const std::string& value) {
  size_t pos;
  while ((pos = text.find(key)) != std::string::npos)
    text.replace(pos, key.size(), value);
  return text;
}
}  // namespace

int64_t run_external_synthesis(const std::string& tool_path,
                               const std::filesystem::path& graph_file,
                               std::span<const int64_t> seq,
                               const std::string& command_template) {
  if (tool_path.find('/') != std::string::npos &&
      !std::filesystem::exists(tool_path))
    throw CapabilityError("synthesis tool not found: " + tool_path);

  std::string commands;
  for (size_t i = 0; i < seq.size(); ++i) {
    if (i) commands += "; ";
    commands += tool_command(seq[i]);
  }
  std::string cmd = command_template;
  cmd = substitute(cmd, "{tool}", tool_path);
  cmd = substitute(cmd, "{graph}", graph_file.string());
  cmd = substitute(cmd, "{commands}", commands);
  cmd = substitute(cmd, "; ;", ";");  // empty sequence leaves no dangling step

  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) throw CapabilityError("cannot launch synthesis tool: " + cmd);
  std::string output;
  char buf[4096];
  size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, got);
  const int status = pclose(pipe);
  const int exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (exit_code == 127)
    throw CapabilityError("synthesis tool not found: " + tool_path);
  if (exit_code != 0)
    throw Error("synthesis tool exited with status " + std::to_string(exit_code) +
                ": " + output.substr(0, 200));

  static const std::regex kCount(R"((?:and|nodes)\s*=\s*([0-9]+))",
                                 std::regex::icase);
  std::smatch m;
  std::string::const_iterator search_start = output.cbegin();
  std::string last;
  while (std::regex_search(search_start, output.cend(), m, kCount)) {
    last = m[1];
    search_start = m.suffix().first;
  }
  if (last.empty())
    throw ParseError("synthesis tool output has no node count: " +
                     output.substr(0, 200));
  return std::stoll(last);
}

}  // namespace qor

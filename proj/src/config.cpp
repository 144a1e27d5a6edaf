// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0

#include "qor/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace qor {

std::string to_string(SeqKind kind) {
  switch (kind) {
    case SeqKind::Transformer: return "transformer";
    case SeqKind::Lstm: return "lstm";
    case SeqKind::Cnn: return "cnn";
  }
  return "?";
}

std::string to_string(GnnKind kind) {
  switch (kind) {
    case GnnKind::Gcn: return "gcn";
    case GnnKind::Gat: return "gat";
    case GnnKind::Sage: return "sage";
  }
  return "?";
}

SeqKind seq_kind_from_string(const std::string& name) {
  if (name == "transformer") return SeqKind::Transformer;
  if (name == "lstm") return SeqKind::Lstm;
  if (name == "cnn") return SeqKind::Cnn;
  throw ConfigError("unknown sequence extractor '" + name +
                    "' (expected transformer, lstm or cnn)");
}

GnnKind gnn_kind_from_string(const std::string& name) {
  if (name == "gcn") return GnnKind::Gcn;
  if (name == "gat") return GnnKind::Gat;
  if (name == "sage") return GnnKind::Sage;
  throw ConfigError("unknown graph extractor '" + name +
                    "' (expected gcn, gat or sage)");
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file for checksum: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a64(buf.str());
}

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad number '" + value + "'");
  }
}

int64_t parse_i64(const std::string& key, const std::string& value) {
  int64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ConfigError("config key '" + key + "': bad integer '" + value + "'");
  return v;
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ConfigError("config key '" + key + "': bad unsigned integer '" + value + "'");
  return v;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string RunConfig::canonical_text() const {
  std::ostringstream os;
  os << "batch=" << batch << "\n";
  os << "dropout=" << format_double(dropout) << "\n";
  os << "epochs=" << epochs << "\n";
  os << "graph_extractor=" << to_string(graph_extractor) << "\n";
  os << "lr=" << format_double(lr) << "\n";
  os << "seed=" << seed << "\n";
  os << "seq_extractor=" << to_string(seq_extractor) << "\n";
  return os.str();
}

void RunConfig::set_key(const std::string& key, const std::string& value) {
  if (key == "seq_extractor")
    seq_extractor = seq_kind_from_string(value);
  else if (key == "graph_extractor")
    graph_extractor = gnn_kind_from_string(value);
  else if (key == "lr")
    lr = parse_double(key, value);
  else if (key == "batch")
    batch = parse_i64(key, value);
  else if (key == "epochs")
    epochs = parse_i64(key, value);
  else if (key == "dropout")
    dropout = parse_double(key, value);
  else if (key == "seed")
    seed = parse_u64(key, value);
  else
    throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  if (lr <= 0) throw ConfigError("config: lr must be > 0");
  if (batch < 1) throw ConfigError("config: batch must be >= 1");
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (dropout < 0 || dropout >= 1)
    throw ConfigError("config: dropout must be in [0, 1)");
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected 'key=value', got '" + line + "'");
    cfg.set_key(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str(), path.filename().string());
}

}  // namespace qor

// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0

#include "qor/vocab.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace qor {

namespace {
const std::array<std::string, kVocabSize> kTokens = {
    "refactor", "refactor-z", "rewrite", "rewrite-z",
    "resub",    "resub-z",    "balance"};
}

std::span<const std::string> vocabulary() {
  return {kTokens.data(), kTokens.size()};
}

std::vector<int64_t> tokenize(std::span<const std::string> names) {
  std::vector<int64_t> ids;
  ids.reserve(names.size());
  for (size_t i = 0; i < names.size(); ++i) {
    int64_t id = -1;
    for (int64_t v = 0; v < kVocabSize; ++v)
      if (names[i] == kTokens[static_cast<size_t>(v)]) {
        id = v;
        break;
      }
    if (id < 0)
      throw ValueError("unknown transformation '" + names[i] +
                       "' at position " + std::to_string(i));
    ids.push_back(id);
  }
  return ids;
}

std::vector<std::string> detokenize(std::span<const int64_t> ids) {
  std::vector<std::string> names;
  names.reserve(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= kVocabSize)
      throw IndexError("token id " + std::to_string(ids[i]) + " at position " +
                       std::to_string(i) + " outside [0, 7)");
    names.push_back(kTokens[static_cast<size_t>(ids[i])]);
  }
  return names;
}

std::string tool_command(int64_t id) {
  if (id < 0 || id >= kVocabSize)
    throw IndexError("token id " + std::to_string(id) + " outside [0, 7)");
  std::string name = kTokens[static_cast<size_t>(id)];
  if (name.size() > 2 && name.compare(name.size() - 2, 2, "-z") == 0) {
    name.resize(name.size() - 2);
    name += " -z";
  }
  return name;
}

std::string normalize_token_name(const std::string& raw) {
  // Collapse "<op><ws>-z" to "<op>-z".
  const size_t z = raw.rfind("-z");
  if (z == std::string::npos || z + 2 != raw.size()) return raw;
  size_t end = z;
  while (end > 0 && (raw[end - 1] == ' ' || raw[end - 1] == '\t')) --end;
  if (end == z) return raw;  // already canonical
  return raw.substr(0, end) + "-z";
}

std::vector<int64_t> parse_sequence_string(const std::string& text) {
  std::vector<std::string> names;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    if (word == "-z" && !names.empty())
      names.back() += "-z";
    else
      names.push_back(word);
  }
  return tokenize(names);
}

Tensor embed(std::span<const int64_t> seq, const Tensor& table) {
  return gather_rows(table, seq);
}

Tensor add_positions(const Tensor& x, const Tensor& positions) {
  return add(x, positions);
}

// ---- corpus ---------------------------------------------------------------------

CorpusRecord parse_corpus_line(const std::string& line, int line_no) {
  const size_t first = line.find(',');
  const size_t last = line.rfind(',');
  if (first == std::string::npos || last == first)
    throw ParseError("corpus line " + std::to_string(line_no) +
                     ": expected '<circuit_id>,<tokens>,<label>'");
  CorpusRecord rec;
  rec.circuit_id = line.substr(0, first);
  if (rec.circuit_id.empty())
    throw ParseError("corpus line " + std::to_string(line_no) + ": empty circuit id");

  std::vector<std::string> names;
  {
    std::istringstream toks(line.substr(first + 1, last - first - 1));
    std::string word;
    while (toks >> word) names.push_back(word);
  }
  if (names.empty())
    throw ParseError("corpus line " + std::to_string(line_no) + ": empty sequence");
  try {
    rec.tokens = tokenize(names);
  } catch (const ValueError& e) {
    throw ParseError("corpus line " + std::to_string(line_no) + ": " + e.what());
  }

  std::string_view lab{line};
  lab = lab.substr(last + 1);
  while (!lab.empty() && (lab.back() == '\r' || lab.back() == ' ')) lab.remove_suffix(1);
  while (!lab.empty() && lab.front() == ' ') lab.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), rec.label);
  if (ec != std::errc{} || ptr != lab.data() + lab.size() || lab.empty())
    throw ParseError("corpus line " + std::to_string(line_no) + ": bad label '" +
                     std::string(lab) + "'");
  return rec;
}

std::vector<CorpusRecord> load_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file " + path.string());
  std::vector<CorpusRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    records.push_back(parse_corpus_line(line, line_no));
  }
  return records;
}

std::string format_corpus_line(const CorpusRecord& rec) {
  std::ostringstream out;
  out << rec.circuit_id << ",";
  auto names = detokenize(rec.tokens);
  for (size_t i = 0; i < names.size(); ++i) out << (i ? " " : "") << names[i];
  out << "," << rec.label;
  return out.str();
}

}  // namespace qor

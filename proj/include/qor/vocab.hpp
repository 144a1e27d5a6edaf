// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// The fixed 7-token vocabulary of synthesis transformations, tokenization of
// optimization sequences, and the sequence-corpus text format.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qor/errors.hpp"
#include "qor/tensor.hpp"

namespace qor {

// Canonical spellings, ids 0..6. The `-z` variants are written with a hyphen
// so every token is whitespace-free in the corpus format.
inline constexpr int64_t kVocabSize = 7;
inline constexpr int64_t kSequenceLength = 20;

std::span<const std::string> vocabulary();

// Strict: every name must be a canonical spelling. Unknown names raise a
// ValueError naming the token and its position. Tool-style spellings such as
// "rewrite -z" are accepted only through normalize_token_name /
// parse_sequence_string below.
std::vector<int64_t> tokenize(std::span<const std::string> names);

std::vector<std::string> detokenize(std::span<const int64_t> ids);

// Canonical name -> synthesis-tool command ("rewrite-z" -> "rewrite -z").
std::string tool_command(int64_t id);

// Alias table: maps the tool-style spelling "<op> -z" (any run of
// whitespace) to the canonical "<op>-z". Other strings pass through.
std::string normalize_token_name(const std::string& raw);

// Splits a whitespace-separated sequence string, merging a dangling "-z"
// into the preceding token, then tokenizes. This is the entry point for
// sequences arriving on a command line.
std::vector<int64_t> parse_sequence_string(const std::string& text);

// Row t of the result is table[seq[t]]; gradients scatter-add into the table.
Tensor embed(std::span<const int64_t> seq, const Tensor& table);

// Elementwise sum of token embeddings and learned position embeddings.
Tensor add_positions(const Tensor& x, const Tensor& positions);

// ---- sequence corpus -----------------------------------------------------------
//
// One record per line, no header:
//   <circuit_id>,<tok0> <tok1> ... <tokL-1>,<raw_label_int>

struct CorpusRecord {
  std::string circuit_id;
  std::vector<int64_t> tokens;
  int64_t label = 0;
};

CorpusRecord parse_corpus_line(const std::string& line, int line_no);
std::vector<CorpusRecord> load_corpus_file(const std::filesystem::path& path);
std::string format_corpus_line(const CorpusRecord& rec);

}  // namespace qor

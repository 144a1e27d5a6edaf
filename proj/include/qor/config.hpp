// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value run configuration. The canonical text (fixed key order,
// canonical number formatting) is hashed into the bundle fingerprint, so a
// bundle can reject a mismatched configuration on load.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "qor/errors.hpp"
#include "qor/gnn.hpp"

namespace qor {

enum class SeqKind { Transformer, Lstm, Cnn };

std::string to_string(SeqKind kind);
std::string to_string(GnnKind kind);
SeqKind seq_kind_from_string(const std::string& name);
GnnKind gnn_kind_from_string(const std::string& name);

uint64_t fnv1a64(std::string_view bytes);
uint64_t fnv1a64_file(const std::filesystem::path& path);

struct RunConfig {
  SeqKind seq_extractor = SeqKind::Transformer;
  GnnKind graph_extractor = GnnKind::Sage;
  double lr = 0.001;
  int64_t batch = 32;
  int64_t epochs = 80;
  double dropout = 0.2;
  uint64_t seed = 0;

  // Keys in canonical (alphabetical) order, one per line. Paths are not part
  // of the configuration identity.
  std::string canonical_text() const;
  uint64_t fingerprint() const { return fnv1a64(canonical_text()); }

  // Throws ConfigError naming the key on unknown keys or bad values.
  void set_key(const std::string& key, const std::string& value);
  void validate() const;

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_text(const std::string& text, const std::string& origin);
};

}  // namespace qor

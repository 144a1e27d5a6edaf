// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// Three interchangeable sequence feature extractors. Each maps a batch of
// fixed-length token sequences to one feature vector per sequence:
// transformer -> 50, lstm -> 64, cnn -> 50 wide (default configs).
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qor/rng.hpp"
#include "qor/tensor.hpp"

namespace qor {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// ---- attention building blocks ---------------------------------------------------

// score_i = q . k_i / sqrt(d); q is [d], keys is [L, d], result [L].
Tensor attention_scores(const Tensor& q, const Tensor& keys);

// One self-attention head over a single sequence x [L, d_model]:
// softmax(Q K^T / sqrt(d_head)) V with Q = x Wq, K = x Wk, V = x Wv.
Tensor self_attention_head(const Tensor& x, const Tensor& wq, const Tensor& wk,
                           const Tensor& wv);

struct AttentionHeadParams {
  Tensor wq, wk, wv;  // each [d_model, d_head]
};

// Multi-head attention over x [B, L, d_model] (or [L, d_model], treated as
// batch 1): heads run independently, outputs are concatenated and mixed by
// w0 [d_model, d_model].
Tensor multi_head_attention(const Tensor& x,
                            std::span<const AttentionHeadParams> heads,
                            const Tensor& w0);

struct TransformerBlockParams {
  std::vector<AttentionHeadParams> heads;
  Tensor w0;
  Tensor ln1_gain, ln1_bias;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor ln2_gain, ln2_bias;
};

// LN(x + MultiHead(x)) followed by LN(prev + FeedForward(prev)); the
// feed-forward is linear -> relu -> linear.
Tensor transformer_block(const Tensor& x, const TransformerBlockParams& params);

// ---- transformer extractor ---------------------------------------------------------

struct TransformerConfig {
  int64_t seq_len = 20;
  int64_t d_model = 4;
  int64_t heads = 2;
  int64_t ff_width = 32;
  int64_t blocks = 3;
  int64_t out_width = 50;
};

class TransformerExtractor {
 public:
  TransformerExtractor(const TransformerConfig& cfg, Rng& rng);

  // ids is row-major [batch, seq_len]; result [batch, out_width].
  Tensor forward(std::span<const int64_t> ids, int64_t batch) const;

  void collect_params(NamedParams& out) const;
  const TransformerConfig& config() const { return cfg_; }
  int64_t output_width() const { return cfg_.out_width; }

  const Tensor& token_table() const { return token_table_; }
  const Tensor& position_table() const { return pos_table_; }
  const TransformerBlockParams& block(size_t i) const { return blocks_[i]; }

 private:
  TransformerConfig cfg_;
  Tensor token_table_;  // [7, d_model]
  Tensor pos_table_;    // [seq_len, d_model]
  std::vector<TransformerBlockParams> blocks_;
  Tensor out_w_, out_b_;  // [seq_len * d_model, out_width], [out_width]
};

// ---- lstm extractor ------------------------------------------------------------------

struct LstmConfig {
  int64_t seq_len = 20;
  int64_t embed_width = 3;
  int64_t hidden_width = 64;
  int64_t layers = 2;
};

struct LstmLayerParams {
  Tensor w_ih;  // [input, 4H], gate order: input, forget, candidate, output
  Tensor w_hh;  // [H, 4H]
  Tensor bias;  // [4H]
};

// One step: returns (h', c') for inputs x [B, input], h and c [B, H].
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h,
                                    const Tensor& c,
                                    const LstmLayerParams& params);

class LstmExtractor {
 public:
  LstmExtractor(const LstmConfig& cfg, Rng& rng);

  // Final time-step hidden state of the top layer, [batch, hidden_width].
  Tensor forward(std::span<const int64_t> ids, int64_t batch) const;

  void collect_params(NamedParams& out) const;
  const LstmConfig& config() const { return cfg_; }
  int64_t output_width() const { return cfg_.hidden_width; }

  const Tensor& token_table() const { return token_table_; }
  const LstmLayerParams& layer(size_t i) const { return layers_[i]; }

 private:
  LstmConfig cfg_;
  Tensor token_table_;  // [7, embed_width]
  std::vector<LstmLayerParams> layers_;
};

// ---- cnn extractor -------------------------------------------------------------------

struct CnnConfig {
  int64_t seq_len = 20;
  int64_t embed_width = 3;
  std::vector<int64_t> kernels = {21, 24, 27, 30};  // one filter each
  int64_t stride = 3;

  int64_t flat_width() const { return seq_len * embed_width; }
  int64_t window_count(int64_t kernel) const {
    return (flat_width() - kernel) / stride + 1;
  }
  int64_t output_width() const {
    int64_t total = 0;
    for (int64_t k : kernels) total += window_count(k);
    return total;
  }
};

class CnnExtractor {
 public:
  CnnExtractor(const CnnConfig& cfg, Rng& rng);

  // Concatenated window responses of all filters, [batch, output_width].
  Tensor forward(std::span<const int64_t> ids, int64_t batch) const;

  void collect_params(NamedParams& out) const;
  const CnnConfig& config() const { return cfg_; }
  int64_t output_width() const { return cfg_.output_width(); }

  const Tensor& token_table() const { return token_table_; }

 private:
  CnnConfig cfg_;
  Tensor token_table_;  // [7, embed_width]
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
};

}  // namespace qor

// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0

#include "qor/extractors.hpp"

#include <cmath>

#include "qor/vocab.hpp"

namespace qor {

namespace {

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor init_linear(Shape shape, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(std::move(shape), -bound, bound, rng, true);
}

Tensor init_embedding(Shape shape, Rng& rng) {
  return Tensor::uniform(std::move(shape), -1.0, 1.0, rng, true);
}

void check_ids(std::span<const int64_t> ids, int64_t batch, int64_t seq_len,
               const char* who) {
  if (batch < 1 || static_cast<int64_t>(ids.size()) != batch * seq_len)
    throw ShapeError(std::string(who) + ": got " + std::to_string(ids.size()) +
                     " token ids for batch " + std::to_string(batch) +
                     " of length-" + std::to_string(seq_len) + " sequences");
}

}  // namespace

// ---- attention ---------------------------------------------------------------------

Tensor attention_scores(const Tensor& q, const Tensor& keys) {
  if (q.rank() != 1 || keys.rank() != 2 || keys.dim(1) != q.dim(0))
    throw ShapeError("attention_scores: query " + shape_str(q.shape()) +
                     " vs keys " + shape_str(keys.shape()));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.dim(0)));
  Tensor col = matmul(keys, reshape(q, {q.dim(0), 1}));  // [L, 1]
  return scale(reshape(col, {keys.dim(0)}), inv_sqrt_d);
}

Tensor self_attention_head(const Tensor& x, const Tensor& wq, const Tensor& wk,
                           const Tensor& wv) {
  Tensor q = matmul(x, wq);
  Tensor k = matmul(x, wk);
  Tensor v = matmul(x, wv);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  Tensor weights = softmax_last(scale(matmul_nt(q, k), inv_sqrt_d));
  return matmul(weights, v);
}

Tensor multi_head_attention(const Tensor& x,
                            std::span<const AttentionHeadParams> heads,
                            const Tensor& w0) {
  const bool single = x.rank() == 2;
  Tensor x3 = single ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;
  const int64_t batch = x3.dim(0), len = x3.dim(1), d_model = x3.dim(2);
  Tensor flat = reshape(x3, {batch * len, d_model});
  std::vector<Tensor> outs;
  outs.reserve(heads.size());
  for (const auto& head : heads) {
    const int64_t d_head = head.wq.dim(1);
    Tensor q = reshape(matmul(flat, head.wq), {batch, len, d_head});
    Tensor k = reshape(matmul(flat, head.wk), {batch, len, d_head});
    Tensor v = reshape(matmul(flat, head.wv), {batch, len, d_head});
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d_head));
    Tensor weights = softmax_last(scale(bmm(q, k, /*trans_b=*/true), inv_sqrt_d));
    outs.push_back(bmm(weights, v));
  }
  Tensor cat = concat_last(outs);  // [B, L, d_model]
  Tensor z = matmul(reshape(cat, {batch * len, d_model}), w0);
  Tensor z3 = reshape(z, {batch, len, w0.dim(1)});
  return single ? reshape(z3, {len, w0.dim(1)}) : z3;
}

Tensor transformer_block(const Tensor& x, const TransformerBlockParams& p) {
  const bool single = x.rank() == 2;
  Tensor x3 = single ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;
  const int64_t batch = x3.dim(0), len = x3.dim(1), d_model = x3.dim(2);

  Tensor attn = multi_head_attention(x3, p.heads, p.w0);
  Tensor h = layer_norm(add(x3, attn), p.ln1_gain, p.ln1_bias);

  Tensor flat = reshape(h, {batch * len, d_model});
  Tensor ff = add_rowvec(matmul(flat, p.ff_w1), p.ff_b1);
  ff = relu(ff);
  ff = add_rowvec(matmul(ff, p.ff_w2), p.ff_b2);
  Tensor out = layer_norm(add(h, reshape(ff, {batch, len, d_model})),
                          p.ln2_gain, p.ln2_bias);
  return single ? reshape(out, {len, d_model}) : out;
}

// ---- transformer extractor ------------------------------------------------------------

TransformerExtractor::TransformerExtractor(const TransformerConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg_.d_model % cfg_.heads != 0)
    throw ValueError("transformer: d_model " + std::to_string(cfg_.d_model) +
                     " not divisible by " + std::to_string(cfg_.heads) + " heads");
  const int64_t d_head = cfg_.d_model / cfg_.heads;
  token_table_ = init_embedding({kVocabSize, cfg_.d_model}, rng);
  pos_table_ = init_embedding({cfg_.seq_len, cfg_.d_model}, rng);
  for (int64_t b = 0; b < cfg_.blocks; ++b) {
    TransformerBlockParams blk;
    for (int64_t h = 0; h < cfg_.heads; ++h) {
      AttentionHeadParams head;
      head.wq = init_linear({cfg_.d_model, d_head}, cfg_.d_model, rng);
      head.wk = init_linear({cfg_.d_model, d_head}, cfg_.d_model, rng);
      head.wv = init_linear({cfg_.d_model, d_head}, cfg_.d_model, rng);
      blk.heads.push_back(std::move(head));
    }
    blk.w0 = init_linear({cfg_.d_model, cfg_.d_model}, cfg_.d_model, rng);
    blk.ln1_gain = Tensor::full({cfg_.d_model}, 1.0, true);
    blk.ln1_bias = Tensor::zeros({cfg_.d_model}, true);
    blk.ff_w1 = init_linear({cfg_.d_model, cfg_.ff_width}, cfg_.d_model, rng);
    blk.ff_b1 = init_linear({cfg_.ff_width}, cfg_.d_model, rng);
    blk.ff_w2 = init_linear({cfg_.ff_width, cfg_.d_model}, cfg_.ff_width, rng);
    blk.ff_b2 = init_linear({cfg_.d_model}, cfg_.ff_width, rng);
    blk.ln2_gain = Tensor::full({cfg_.d_model}, 1.0, true);
    blk.ln2_bias = Tensor::zeros({cfg_.d_model}, true);
    blocks_.push_back(std::move(blk));
  }
  const int64_t flat = cfg_.seq_len * cfg_.d_model;
  out_w_ = init_linear({flat, cfg_.out_width}, flat, rng);
  out_b_ = init_linear({cfg_.out_width}, flat, rng);
}

Tensor TransformerExtractor::forward(std::span<const int64_t> ids,
                                     int64_t batch) const {
  check_ids(ids, batch, cfg_.seq_len, "transformer");
  std::vector<int64_t> pos_ids(static_cast<size_t>(batch * cfg_.seq_len));
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t t = 0; t < cfg_.seq_len; ++t)
      pos_ids[static_cast<size_t>(b * cfg_.seq_len + t)] = t;
  Tensor tok = gather_rows(token_table_, ids);
  Tensor pos = gather_rows(pos_table_, pos_ids);
  Tensor x = reshape(add(tok, pos), {batch, cfg_.seq_len, cfg_.d_model});
  for (const auto& blk : blocks_) x = transformer_block(x, blk);
  Tensor flat = reshape(x, {batch, cfg_.seq_len * cfg_.d_model});
  return add_rowvec(matmul(flat, out_w_), out_b_);
}

void TransformerExtractor::collect_params(NamedParams& out) const {
  out.emplace_back("seq.token_table", token_table_);
  out.emplace_back("seq.pos_table", pos_table_);
  for (size_t b = 0; b < blocks_.size(); ++b) {
    const auto& blk = blocks_[b];
    const std::string p = "seq.block" + std::to_string(b) + ".";
    for (size_t h = 0; h < blk.heads.size(); ++h) {
      const std::string hp = p + "head" + std::to_string(h) + ".";
      out.emplace_back(hp + "wq", blk.heads[h].wq);
      out.emplace_back(hp + "wk", blk.heads[h].wk);
      out.emplace_back(hp + "wv", blk.heads[h].wv);
    }
    out.emplace_back(p + "w0", blk.w0);
    out.emplace_back(p + "ln1_gain", blk.ln1_gain);
    out.emplace_back(p + "ln1_bias", blk.ln1_bias);
    out.emplace_back(p + "ff_w1", blk.ff_w1);
    out.emplace_back(p + "ff_b1", blk.ff_b1);
    out.emplace_back(p + "ff_w2", blk.ff_w2);
    out.emplace_back(p + "ff_b2", blk.ff_b2);
    out.emplace_back(p + "ln2_gain", blk.ln2_gain);
    out.emplace_back(p + "ln2_bias", blk.ln2_bias);
  }
  out.emplace_back("seq.out_w", out_w_);
  out.emplace_back("seq.out_b", out_b_);
}

// ---- lstm ------------------------------------------------------------------------------

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h,
                                    const Tensor& c,
                                    const LstmLayerParams& params) {
  const int64_t hidden = params.w_hh.dim(0);
  Tensor z = add_rowvec(add(matmul(x, params.w_ih), matmul(h, params.w_hh)),
                        params.bias);
  Tensor gate_i = sigmoid(slice_last(z, 0, hidden));
  Tensor gate_f = sigmoid(slice_last(z, hidden, hidden));
  Tensor cand = tanh_act(slice_last(z, 2 * hidden, hidden));
  Tensor gate_o = sigmoid(slice_last(z, 3 * hidden, hidden));
  Tensor c_next = add(mul(gate_f, c), mul(gate_i, cand));
  Tensor h_next = mul(gate_o, tanh_act(c_next));
  return {h_next, c_next};
}

LstmExtractor::LstmExtractor(const LstmConfig& cfg, Rng& rng) : cfg_(cfg) {
  token_table_ = init_embedding({kVocabSize, cfg_.embed_width}, rng);
  for (int64_t l = 0; l < cfg_.layers; ++l) {
    const int64_t in = l == 0 ? cfg_.embed_width : cfg_.hidden_width;
    LstmLayerParams layer;
    layer.w_ih = init_linear({in, 4 * cfg_.hidden_width}, in, rng);
    layer.w_hh = init_linear({cfg_.hidden_width, 4 * cfg_.hidden_width},
                             cfg_.hidden_width, rng);
    layer.bias = init_linear({4 * cfg_.hidden_width}, cfg_.hidden_width, rng);
    layers_.push_back(std::move(layer));
  }
}

Tensor LstmExtractor::forward(std::span<const int64_t> ids, int64_t batch) const {
  check_ids(ids, batch, cfg_.seq_len, "lstm");
  std::vector<Tensor> h(layers_.size()), c(layers_.size());
  for (size_t l = 0; l < layers_.size(); ++l) {
    h[l] = Tensor::zeros({batch, cfg_.hidden_width});
    c[l] = Tensor::zeros({batch, cfg_.hidden_width});
  }
  std::vector<int64_t> step_ids(static_cast<size_t>(batch));
  for (int64_t t = 0; t < cfg_.seq_len; ++t) {
    for (int64_t b = 0; b < batch; ++b)
      step_ids[static_cast<size_t>(b)] = ids[static_cast<size_t>(b * cfg_.seq_len + t)];
    Tensor x = gather_rows(token_table_, step_ids);
    for (size_t l = 0; l < layers_.size(); ++l) {
      auto [hn, cn] = lstm_cell(x, h[l], c[l], layers_[l]);
      h[l] = hn;
      c[l] = cn;
      x = hn;
    }
  }
  return h.back();
}

void LstmExtractor::collect_params(NamedParams& out) const {
  out.emplace_back("seq.token_table", token_table_);
  for (size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "seq.layer" + std::to_string(l) + ".";
    out.emplace_back(p + "w_ih", layers_[l].w_ih);
    out.emplace_back(p + "w_hh", layers_[l].w_hh);
    out.emplace_back(p + "bias", layers_[l].bias);
  }
}

// ---- cnn -------------------------------------------------------------------------------

CnnExtractor::CnnExtractor(const CnnConfig& cfg, Rng& rng) : cfg_(cfg) {
  for (int64_t k : cfg_.kernels)
    if (k > cfg_.flat_width())
      throw ValueError("cnn: kernel " + std::to_string(k) +
                       " wider than flattened input " +
                       std::to_string(cfg_.flat_width()));
  token_table_ = init_embedding({kVocabSize, cfg_.embed_width}, rng);
  for (int64_t k : cfg_.kernels) {
    kernels_.push_back(init_linear({k}, k, rng));
    biases_.push_back(init_linear({1}, k, rng));
  }
}

Tensor CnnExtractor::forward(std::span<const int64_t> ids, int64_t batch) const {
  check_ids(ids, batch, cfg_.seq_len, "cnn");
  Tensor emb = gather_rows(token_table_, ids);  // [B*L, embed]
  Tensor flat = reshape(emb, {batch, cfg_.flat_width()});
  std::vector<Tensor> outs;
  outs.reserve(kernels_.size());
  for (size_t i = 0; i < kernels_.size(); ++i)
    outs.push_back(conv1d(flat, kernels_[i], biases_[i], cfg_.stride));
  return concat_last(outs);
}

void CnnExtractor::collect_params(NamedParams& out) const {
  out.emplace_back("seq.token_table", token_table_);
  for (size_t i = 0; i < kernels_.size(); ++i) {
    out.emplace_back("seq.kernel" + std::to_string(i), kernels_[i]);
    out.emplace_back("seq.kernel" + std::to_string(i) + "_bias", biases_[i]);
  }
}

}  // namespace qor

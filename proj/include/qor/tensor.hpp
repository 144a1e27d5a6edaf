// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense 64-bit tensors with reverse-mode automatic differentiation and the
// Adam optimizer. Operations record a computation graph; backward() walks it
// in reverse creation order, which makes gradient accumulation order fixed
// and results bit-reproducible.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qor/errors.hpp"
#include "qor/rng.hpp"

namespace qor {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class Mode { Train, Eval };
enum class Act { Relu, Elu, LeakyRelu, Sigmoid, Tanh };
enum class Reduce { Sum, Mean, Max };

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;  // allocated on first use, same length as val
  bool requires_grad = false;
  uint64_t id = 0;  // creation order; backward processes ids descending
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value);
  // Elements drawn uniformly from [lo, hi) in row-major order.
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(node_->val.size()); }

  std::span<const double> data() const { return node_->val; }
  // Direct access for initialization and optimizer updates; mutating a
  // tensor that already participates in a recorded graph is on the caller.
  std::span<double> mutable_data() { return node_->val; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const;
  void zero_grad();

  double item() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---- arithmetic -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);      // [m,k]x[k,n] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);   // [m,d]x[n,d] -> [m,n]
// Batched matmul: a [B,m,k], b [B,k,n] (or [B,n,k] with trans_b) -> [B,m,n].
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
// x [..., d] + v [d], broadcast over leading axes.
Tensor add_rowvec(const Tensor& x, const Tensor& v);
// Row r of x [n, d] scaled by s[r]; s has shape [n] or [n, 1].
Tensor scale_rows(const Tensor& x, const Tensor& s);

Tensor activation(const Tensor& x, Act kind, double leaky_slope = 0.01);
Tensor relu(const Tensor& x);
Tensor elu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor tanh_act(const Tensor& x);

// ---- normalization & regularization ---------------------------------------

// Softmax over the last axis; numerically stabilized by max subtraction.
Tensor softmax_last(const Tensor& x);

// Per-row (last axis) zero mean / unit variance, then gain and bias [d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Trainable affine plus running statistics for one [*, width] activation.
// The running variance stores the biased (population) batch variance so that
// eval with momentum-1-fitted statistics reproduces the train output.
struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNorm(int64_t width);
};

// Train mode normalizes x [n, d] by batch statistics (n >= 2) and updates
// the running statistics; eval mode uses the running statistics.
Tensor batch_norm(const Tensor& x, BatchNorm& state, Mode mode);

// Train mode zeroes each element with probability p and scales survivors by
// 1/(1-p); eval mode is the identity. Mask draws consume rng in row-major
// element order.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng);

// ---- indexing & reduction --------------------------------------------------

// Row i of the result is table[ids[i]]; gradients scatter-add into table.
Tensor gather_rows(const Tensor& table, std::span<const int64_t> ids);

// Per-segment reduction of rows of values [n, d] into [n_segments, d].
// Mean/max require every referenced segment to be non-empty; max gradients
// route to the lowest-index argmax element.
Tensor segment_reduce(const Tensor& values, std::span<const int64_t> seg_ids,
                      int64_t n_segments, Reduce kind);

// Softmax of scores [E] or [E, 1] within each segment (max-stabilized).
Tensor segment_softmax(const Tensor& scores, std::span<const int64_t> seg_ids,
                       int64_t n_segments);

Tensor concat_last(std::span<const Tensor> parts);
Tensor slice_last(const Tensor& x, int64_t start, int64_t len);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum_all(const Tensor& x);   // -> [1]
Tensor mean_all(const Tensor& x);  // -> [1]

// One-filter 1-D convolution over rows of x [n, len] with kernel [k] and
// bias [1]; output [n, floor((len-k)/stride)+1].
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int64_t stride);

// ---- reverse mode ----------------------------------------------------------

// Accumulates d(loss)/d(leaf) into the grad buffer of every requires_grad
// leaf reachable from the scalar loss. Intermediate grads are reset at entry,
// leaf grads accumulate across calls.
void backward(const Tensor& loss);

// Test hook: flips the sign of the gradient flowing through every node whose
// op name matches, corrupting that backward rule. Empty name disables.
void set_backward_sign_flip(const std::string& op_name);

// ---- optimizer --------------------------------------------------------------

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Bias-corrected Adam update applied in place to every param from its
// accumulated gradient. Moment buffers are allocated on the first call and
// checked against parameter shapes afterwards.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace qor

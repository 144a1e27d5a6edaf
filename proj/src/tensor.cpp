// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0

#include "qor/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "qor/kernels.hpp"

namespace qor {

namespace {

std::atomic<uint64_t> g_next_id{1};
std::string g_flip_op;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(const char* op, Shape shape,
                  std::initializer_list<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->val.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  for (const auto& p : parents) {
    n->requires_grad = n->requires_grad || p->requires_grad;
    n->parents.push_back(p);
  }
  return n;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Rows/cols view of a tensor collapsed onto its last axis.
std::pair<int64_t, int64_t> rows_cols(const Tensor& x, const char* op) {
  if (x.rank() < 1) throw ShapeError(std::string(op) + ": rank-0 input");
  int64_t cols = x.dim(x.rank() - 1);
  int64_t rows = x.size() / cols;
  return {rows, cols};
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  for (int64_t d : shape)
    if (d <= 0) throw ShapeError("tensor: non-positive extent in " + shape_str(shape));
  auto n = make_node("leaf", std::move(shape), {});
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node()->val.begin(), t.node()->val.end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw ShapeError("tensor: " + std::to_string(data.size()) +
                     " values do not fill shape " + shape_str(shape));
  Tensor t = zeros(std::move(shape), requires_grad);
  t.node()->val = std::move(data);
  return t;
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& x : t.node()->val) x = rng.uniform(lo, hi);
  return t;
}

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty())
    throw Error("tensor: gradient not computed for this tensor");
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1)
    throw ShapeError("item: tensor has " + std::to_string(size()) +
                     " elements, expected 1");
  return node_->val[0];
}

// ---- matmul family ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = make_node("matmul", {m, n}, {a.node(), b.node()});
  kernels::gemm(a.data().data(), b.data().data(), out->val.data(), m, k, n,
                false, false, false);
  if (out->requires_grad) {
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward_fn = [an, bn, m, k, n](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();  // dA += dC * B^T
        kernels::gemm(self.grad.data(), bn->val.data(), an->grad.data(), m, n,
                      k, false, true, true);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();  // dB += A^T * dC
        kernels::gemm(an->val.data(), self.grad.data(), bn->grad.data(), k, m,
                      n, true, false, true);
      }
    };
  }
  return Tensor(out);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("matmul_nt: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()) + "^T");
  const int64_t m = a.dim(0), d = a.dim(1), n = b.dim(0);
  auto out = make_node("matmul_nt", {m, n}, {a.node(), b.node()});
  kernels::gemm(a.data().data(), b.data().data(), out->val.data(), m, d, n,
                false, true, false);
  if (out->requires_grad) {
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward_fn = [an, bn, m, d, n](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();  // dA += dC * B
        kernels::gemm(self.grad.data(), bn->val.data(), an->grad.data(), m, n,
                      d, false, false, true);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();  // dB += dC^T * A
        kernels::gemm(self.grad.data(), an->val.data(), bn->grad.data(), n, m,
                      d, true, false, true);
      }
    };
  }
  return Tensor(out);
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0))
    throw ShapeError("bmm: expected equal-batch rank-3 tensors, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const int64_t n = trans_b ? b.dim(1) : b.dim(2);
  const int64_t bk = trans_b ? b.dim(2) : b.dim(1);
  if (bk != k)
    throw ShapeError("bmm: inner dimensions disagree, " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()) +
                     (trans_b ? " (transposed)" : ""));
  auto out = make_node("bmm", {batch, m, n}, {a.node(), b.node()});
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  for (int64_t i = 0; i < batch; ++i)
    kernels::gemm(ap + i * m * k, bp + i * k * n, out->val.data() + i * m * n,
                  m, k, n, false, trans_b, false);
  if (out->requires_grad) {
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward_fn = [an, bn, batch, m, k, n, trans_b](Node& self) {
      for (int64_t i = 0; i < batch; ++i) {
        const double* dC = self.grad.data() + i * m * n;
        const double* A = an->val.data() + i * m * k;
        const double* B = bn->val.data() + i * k * n;
        if (an->requires_grad) {
          an->ensure_grad();
          double* dA = an->grad.data() + i * m * k;
          // C = A*B: dA += dC*B^T. C = A*B^T: dA += dC*B.
          kernels::gemm(dC, B, dA, m, n, k, false, !trans_b, true);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          double* dB = bn->grad.data() + i * k * n;
          if (!trans_b)  // dB += A^T * dC
            kernels::gemm(A, dC, dB, k, m, n, true, false, true);
          else  // stored B is [n,k]: dB += dC^T * A
            kernels::gemm(dC, A, dB, n, m, k, true, false, true);
        }
      }
    };
  }
  return Tensor(out);
}

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  auto out = make_node("add", a.shape(), {a.node(), b.node()});
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* op = out->val.data();
  kernels::parallel_for(a.size(), [&](int64_t i) { op[i] = ap[i] + bp[i]; });
  if (out->requires_grad) {
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward_fn = [an, bn](Node& self) {
      const int64_t n = static_cast<int64_t>(self.val.size());
      if (an->requires_grad) {
        an->ensure_grad();
        for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  auto out = make_node("sub", a.shape(), {a.node(), b.node()});
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* op = out->val.data();
  kernels::parallel_for(a.size(), [&](int64_t i) { op[i] = ap[i] - bp[i]; });
  if (out->requires_grad) {
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward_fn = [an, bn](Node& self) {
      const int64_t n = static_cast<int64_t>(self.val.size());
      if (an->requires_grad) {
        an->ensure_grad();
        for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t i = 0; i < n; ++i) bn->grad[i] -= self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  auto out = make_node("mul", a.shape(), {a.node(), b.node()});
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  double* op = out->val.data();
  kernels::parallel_for(a.size(), [&](int64_t i) { op[i] = ap[i] * bp[i]; });
  if (out->requires_grad) {
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward_fn = [an, bn](Node& self) {
      const int64_t n = static_cast<int64_t>(self.val.size());
      if (an->requires_grad) {
        an->ensure_grad();
        for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] * bn->val[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i] * an->val[i];
      }
    };
  }
  return Tensor(out);
}

Tensor scale(const Tensor& a, double c) {
  auto out = make_node("scale", a.shape(), {a.node()});
  const double* ap = a.data().data();
  double* op = out->val.data();
  kernels::parallel_for(a.size(), [&](int64_t i) { op[i] = ap[i] * c; });
  if (out->requires_grad) {
    Node* an = a.node().get();
    out->backward_fn = [an, c](Node& self) {
      an->ensure_grad();
      for (size_t i = 0; i < self.val.size(); ++i)
        an->grad[i] += self.grad[i] * c;
    };
  }
  return Tensor(out);
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  auto [rows, cols] = rows_cols(x, "add_rowvec");
  if (v.rank() != 1 || v.dim(0) != cols)
    throw ShapeError("add_rowvec: vector " + shape_str(v.shape()) +
                     " does not match last axis of " + shape_str(x.shape()));
  auto out = make_node("add_rowvec", x.shape(), {x.node(), v.node()});
  const double* xp = x.data().data();
  const double* vp = v.data().data();
  double* op = out->val.data();
  kernels::parallel_for(rows, [&](int64_t r) {
    for (int64_t j = 0; j < cols; ++j) op[r * cols + j] = xp[r * cols + j] + vp[j];
  });
  if (out->requires_grad) {
    Node* xn = x.node().get();
    Node* vn = v.node().get();
    out->backward_fn = [xn, vn, rows, cols](Node& self) {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (size_t i = 0; i < self.val.size(); ++i)
          xn->grad[i] += self.grad[i];
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < cols; ++j)
            vn->grad[j] += self.grad[r * cols + j];
      }
    };
  }
  return Tensor(out);
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  if (x.rank() != 2)
    throw ShapeError("scale_rows: expected rank-2 input, got " +
                     shape_str(x.shape()));
  const int64_t rows = x.dim(0), cols = x.dim(1);
  if (s.size() != rows)
    throw ShapeError("scale_rows: " + std::to_string(s.size()) +
                     " scales for " + std::to_string(rows) + " rows");
  auto out = make_node("scale_rows", x.shape(), {x.node(), s.node()});
  const double* xp = x.data().data();
  const double* sp = s.data().data();
  double* op = out->val.data();
  kernels::parallel_for(rows, [&](int64_t r) {
    for (int64_t j = 0; j < cols; ++j) op[r * cols + j] = xp[r * cols + j] * sp[r];
  });
  if (out->requires_grad) {
    Node* xn = x.node().get();
    Node* sn = s.node().get();
    out->backward_fn = [xn, sn, rows, cols](Node& self) {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < cols; ++j)
            xn->grad[r * cols + j] += self.grad[r * cols + j] * sn->val[r];
      }
      if (sn->requires_grad) {
        sn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
          double acc = 0.0;
          for (int64_t j = 0; j < cols; ++j)
            acc += self.grad[r * cols + j] * xn->val[r * cols + j];
          sn->grad[r] += acc;
        }
      }
    };
  }
  return Tensor(out);
}

// ---- activations ------------------------------------------------------------

Tensor activation(const Tensor& x, Act kind, double leaky_slope) {
  const char* name = "relu";
  switch (kind) {
    case Act::Relu: name = "relu"; break;
    case Act::Elu: name = "elu"; break;
    case Act::LeakyRelu: name = "leaky_relu"; break;
    case Act::Sigmoid: name = "sigmoid"; break;
    case Act::Tanh: name = "tanh"; break;
  }
  auto out = make_node(name, x.shape(), {x.node()});
  const double* xp = x.data().data();
  double* op = out->val.data();
  switch (kind) {
    case Act::Relu:
      kernels::parallel_for(x.size(),
                            [&](int64_t i) { op[i] = xp[i] > 0 ? xp[i] : 0.0; });
      break;
    case Act::Elu:
      kernels::parallel_for(x.size(), [&](int64_t i) {
        op[i] = xp[i] > 0 ? xp[i] : std::expm1(xp[i]);
      });
      break;
    case Act::LeakyRelu:
      kernels::parallel_for(x.size(), [&](int64_t i) {
        op[i] = xp[i] > 0 ? xp[i] : leaky_slope * xp[i];
      });
      break;
    case Act::Sigmoid:
      kernels::parallel_for(x.size(), [&](int64_t i) {
        op[i] = 1.0 / (1.0 + std::exp(-xp[i]));
      });
      break;
    case Act::Tanh:
      kernels::parallel_for(x.size(),
                            [&](int64_t i) { op[i] = std::tanh(xp[i]); });
      break;
  }
  if (out->requires_grad) {
    Node* xn = x.node().get();
    out->backward_fn = [xn, kind, leaky_slope](Node& self) {
      xn->ensure_grad();
      const size_t n = self.val.size();
      switch (kind) {
        case Act::Relu:  // subgradient 0 at the kink
          for (size_t i = 0; i < n; ++i)
            if (xn->val[i] > 0) xn->grad[i] += self.grad[i];
          break;
        case Act::Elu:  // d/dx = exp(x) = y + 1 for x <= 0
          for (size_t i = 0; i < n; ++i)
            xn->grad[i] +=
                self.grad[i] * (xn->val[i] > 0 ? 1.0 : self.val[i] + 1.0);
          break;
        case Act::LeakyRelu:
          for (size_t i = 0; i < n; ++i)
            xn->grad[i] += self.grad[i] * (xn->val[i] > 0 ? 1.0 : leaky_slope);
          break;
        case Act::Sigmoid:
          for (size_t i = 0; i < n; ++i)
            xn->grad[i] += self.grad[i] * self.val[i] * (1.0 - self.val[i]);
          break;
        case Act::Tanh:
          for (size_t i = 0; i < n; ++i)
            xn->grad[i] += self.grad[i] * (1.0 - self.val[i] * self.val[i]);
          break;
      }
    };
  }
  return Tensor(out);
}

Tensor relu(const Tensor& x) { return activation(x, Act::Relu); }
Tensor elu(const Tensor& x) { return activation(x, Act::Elu); }
Tensor leaky_relu(const Tensor& x, double slope) {
  return activation(x, Act::LeakyRelu, slope);
}
Tensor sigmoid(const Tensor& x) { return activation(x, Act::Sigmoid); }
Tensor tanh_act(const Tensor& x) { return activation(x, Act::Tanh); }

// ---- softmax / normalization --------------------------------------------------

Tensor softmax_last(const Tensor& x) {
  auto [rows, cols] = rows_cols(x, "softmax");
  auto out = make_node("softmax", x.shape(), {x.node()});
  kernels::softmax_rows(x.data().data(), out->val.data(), rows, cols);
  if (out->requires_grad) {
    Node* xn = x.node().get();
    out->backward_fn = [xn, rows, cols](Node& self) {
      xn->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        const double* y = self.val.data() + r * cols;
        const double* dy = self.grad.data() + r * cols;
        double dot = 0.0;
        for (int64_t j = 0; j < cols; ++j) dot += dy[j] * y[j];
        double* dx = xn->grad.data() + r * cols;
        for (int64_t j = 0; j < cols; ++j) dx[j] += (dy[j] - dot) * y[j];
      }
    };
  }
  return Tensor(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  auto [rows, cols] = rows_cols(x, "layer_norm");
  if (gain.rank() != 1 || gain.dim(0) != cols || bias.rank() != 1 ||
      bias.dim(0) != cols)
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(cols) +
                     "]");
  auto out =
      make_node("layer_norm", x.shape(), {x.node(), gain.node(), bias.node()});
  std::vector<double> xhat(static_cast<size_t>(rows * cols));
  std::vector<double> inv_std(static_cast<size_t>(rows));
  const double* xp = x.data().data();
  const double* gp = gain.data().data();
  const double* bp = bias.data().data();
  double* op = out->val.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xp + r * cols;
    double mean = 0.0;
    for (int64_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = is;
    for (int64_t j = 0; j < cols; ++j) {
      const double h = (xr[j] - mean) * is;
      xhat[static_cast<size_t>(r * cols + j)] = h;
      op[r * cols + j] = gp[j] * h + bp[j];
    }
  }
  if (out->requires_grad) {
    Node* xn = x.node().get();
    Node* gn = gain.node().get();
    Node* bn = bias.node().get();
    out->backward_fn = [xn, gn, bn, rows, cols, xh = std::move(xhat),
                        is = std::move(inv_std)](Node& self) {
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < cols; ++j)
            gn->grad[j] += self.grad[r * cols + j] * xh[r * cols + j];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < cols; ++j)
            bn->grad[j] += self.grad[r * cols + j];
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        const double inv_cols = 1.0 / static_cast<double>(cols);
        for (int64_t r = 0; r < rows; ++r) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (int64_t j = 0; j < cols; ++j) {
            const double dxh = self.grad[r * cols + j] * gn->val[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[r * cols + j];
          }
          mean_dxh *= inv_cols;
          mean_dxh_xh *= inv_cols;
          for (int64_t j = 0; j < cols; ++j) {
            const double dxh = self.grad[r * cols + j] * gn->val[j];
            xn->grad[r * cols + j] +=
                is[r] * (dxh - mean_dxh - xh[r * cols + j] * mean_dxh_xh);
          }
        }
      }
    };
  }
  return Tensor(out);
}

BatchNorm::BatchNorm(int64_t width)
    : gamma(Tensor::full({width}, 1.0, true)),
      beta(Tensor::zeros({width}, true)),
      running_mean(static_cast<size_t>(width), 0.0),
      running_var(static_cast<size_t>(width), 1.0) {}

Tensor batch_norm(const Tensor& x, BatchNorm& state, Mode mode) {
  if (x.rank() != 2)
    throw ShapeError("batch_norm: expected rank-2 input, got " +
                     shape_str(x.shape()));
  const int64_t rows = x.dim(0), cols = x.dim(1);
  if (cols != static_cast<int64_t>(state.running_mean.size()))
    throw ShapeError("batch_norm: input width " + std::to_string(cols) +
                     " does not match state width " +
                     std::to_string(state.running_mean.size()));
  if (mode == Mode::Train && rows < 2)
    throw ValueError("batch_norm: train mode needs a batch of at least 2 rows, got " +
                     std::to_string(rows));
  auto out = make_node("batch_norm", x.shape(),
                       {x.node(), state.gamma.node(), state.beta.node()});
  const double* xp = x.data().data();
  const double* gp = state.gamma.data().data();
  const double* bp = state.beta.data().data();
  double* op = out->val.data();
  std::vector<double> mean(static_cast<size_t>(cols));
  std::vector<double> var(static_cast<size_t>(cols));
  if (mode == Mode::Train) {
    for (int64_t j = 0; j < cols; ++j) {
      double m = 0.0;
      for (int64_t r = 0; r < rows; ++r) m += xp[r * cols + j];
      m /= static_cast<double>(rows);
      double v = 0.0;
      for (int64_t r = 0; r < rows; ++r) {
        const double d = xp[r * cols + j] - m;
        v += d * d;
      }
      v /= static_cast<double>(rows);  // population variance
      mean[static_cast<size_t>(j)] = m;
      var[static_cast<size_t>(j)] = v;
      state.running_mean[static_cast<size_t>(j)] =
          (1.0 - state.momentum) * state.running_mean[static_cast<size_t>(j)] +
          state.momentum * m;
      state.running_var[static_cast<size_t>(j)] =
          (1.0 - state.momentum) * state.running_var[static_cast<size_t>(j)] +
          state.momentum * v;
    }
  } else {
    mean.assign(state.running_mean.begin(), state.running_mean.end());
    var.assign(state.running_var.begin(), state.running_var.end());
  }
  std::vector<double> inv_std(static_cast<size_t>(cols));
  for (int64_t j = 0; j < cols; ++j)
    inv_std[static_cast<size_t>(j)] =
        1.0 / std::sqrt(var[static_cast<size_t>(j)] + state.eps);
  std::vector<double> xhat(static_cast<size_t>(rows * cols));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < cols; ++j) {
      const double h = (xp[r * cols + j] - mean[static_cast<size_t>(j)]) *
                       inv_std[static_cast<size_t>(j)];
      xhat[static_cast<size_t>(r * cols + j)] = h;
      op[r * cols + j] = gp[j] * h + bp[j];
    }
  if (out->requires_grad) {
    Node* xn = x.node().get();
    Node* gn = state.gamma.node().get();
    Node* bn = state.beta.node().get();
    const bool train = mode == Mode::Train;
    out->backward_fn = [xn, gn, bn, rows, cols, train, xh = std::move(xhat),
                        is = std::move(inv_std)](Node& self) {
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < cols; ++j)
            gn->grad[j] += self.grad[r * cols + j] * xh[r * cols + j];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < cols; ++j)
            bn->grad[j] += self.grad[r * cols + j];
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        if (!train) {
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < cols; ++j)
              xn->grad[r * cols + j] +=
                  self.grad[r * cols + j] * gn->val[j] * is[j];
        } else {
          const double inv_rows = 1.0 / static_cast<double>(rows);
          for (int64_t j = 0; j < cols; ++j) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (int64_t r = 0; r < rows; ++r) {
              const double dxh = self.grad[r * cols + j] * gn->val[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[r * cols + j];
            }
            mean_dxh *= inv_rows;
            mean_dxh_xh *= inv_rows;
            for (int64_t r = 0; r < rows; ++r) {
              const double dxh = self.grad[r * cols + j] * gn->val[j];
              xn->grad[r * cols + j] +=
                  is[j] * (dxh - mean_dxh - xh[r * cols + j] * mean_dxh_xh);
            }
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw ValueError("dropout: p must be in [0, 1), got " + std::to_string(p));
  if (mode == Mode::Eval || p == 0.0) return x;
  auto out = make_node("dropout", x.shape(), {x.node()});
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.node()->val.size());
  for (double& m : mask) m = rng.next_double() < p ? 0.0 : keep_scale;
  const double* xp = x.data().data();
  double* op = out->val.data();
  for (size_t i = 0; i < mask.size(); ++i) op[i] = xp[i] * mask[i];
  if (out->requires_grad) {
    Node* xn = x.node().get();
    out->backward_fn = [xn, mk = std::move(mask)](Node& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < mk.size(); ++i)
        xn->grad[i] += self.grad[i] * mk[i];
    };
  }
  return Tensor(out);
}

// ---- indexing / reductions -----------------------------------------------------

Tensor gather_rows(const Tensor& table, std::span<const int64_t> ids) {
  if (table.rank() != 2)
    throw ShapeError("gather_rows: table must be rank-2, got " +
                     shape_str(table.shape()));
  const int64_t vocab = table.dim(0), width = table.dim(1);
  for (size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || ids[i] >= vocab)
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) +
                       " at position " + std::to_string(i) +
                       " outside table of " + std::to_string(vocab) + " rows");
  auto out = make_node("gather_rows",
                       {static_cast<int64_t>(ids.size()), width},
                       {table.node()});
  const double* tp = table.data().data();
  double* op = out->val.data();
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tp + ids[i] * width, width,
                op + static_cast<int64_t>(i) * width);
  if (out->requires_grad) {
    Node* tn = table.node().get();
    std::vector<int64_t> idv(ids.begin(), ids.end());
    out->backward_fn = [tn, width, idv = std::move(idv)](Node& self) {
      tn->ensure_grad();
      for (size_t i = 0; i < idv.size(); ++i) {
        const double* g = self.grad.data() + static_cast<int64_t>(i) * width;
        double* dst = tn->grad.data() + idv[i] * width;
        for (int64_t j = 0; j < width; ++j) dst[j] += g[j];
      }
    };
  }
  return Tensor(out);
}

Tensor segment_reduce(const Tensor& values, std::span<const int64_t> seg_ids,
                      int64_t n_segments, Reduce kind) {
  if (values.rank() != 2)
    throw ShapeError("segment_reduce: values must be rank-2, got " +
                     shape_str(values.shape()));
  const int64_t n = values.dim(0), d = values.dim(1);
  if (static_cast<int64_t>(seg_ids.size()) != n)
    throw ShapeError("segment_reduce: " + std::to_string(seg_ids.size()) +
                     " segment ids for " + std::to_string(n) + " rows");
  std::vector<int64_t> counts(static_cast<size_t>(n_segments), 0);
  for (int64_t id : seg_ids) {
    if (id < 0 || id >= n_segments)
      throw IndexError("segment_reduce: segment id " + std::to_string(id) +
                       " outside [0, " + std::to_string(n_segments) + ")");
    ++counts[static_cast<size_t>(id)];
  }
  if (kind != Reduce::Sum)
    for (int64_t s = 0; s < n_segments; ++s)
      if (counts[static_cast<size_t>(s)] == 0)
        throw ValueError("segment_reduce: segment " + std::to_string(s) +
                         " is empty under mean/max");
  const char* name = kind == Reduce::Sum    ? "segment_sum"
                     : kind == Reduce::Mean ? "segment_mean"
                                            : "segment_max";
  auto out = make_node(name, {n_segments, d}, {values.node()});
  const double* vp = values.data().data();
  double* op = out->val.data();
  std::vector<int64_t> argmax;
  if (kind == Reduce::Max) {
    argmax.assign(static_cast<size_t>(n_segments * d), -1);
    for (int64_t i = 0; i < n; ++i) {
      const int64_t s = seg_ids[static_cast<size_t>(i)];
      for (int64_t j = 0; j < d; ++j) {
        int64_t& am = argmax[static_cast<size_t>(s * d + j)];
        // first strictly-greater wins, so ties break to the lowest index
        if (am < 0 || vp[i * d + j] > op[s * d + j]) {
          am = i;
          op[s * d + j] = vp[i * d + j];
        }
      }
    }
  } else {
    for (int64_t i = 0; i < n; ++i) {
      const int64_t s = seg_ids[static_cast<size_t>(i)];
      for (int64_t j = 0; j < d; ++j) op[s * d + j] += vp[i * d + j];
    }
    if (kind == Reduce::Mean)
      for (int64_t s = 0; s < n_segments; ++s) {
        const double inv = counts[static_cast<size_t>(s)]
                               ? 1.0 / static_cast<double>(
                                           counts[static_cast<size_t>(s)])
                               : 0.0;
        for (int64_t j = 0; j < d; ++j) op[s * d + j] *= inv;
      }
  }
  if (out->requires_grad) {
    Node* vn = values.node().get();
    std::vector<int64_t> segv(seg_ids.begin(), seg_ids.end());
    out->backward_fn = [vn, d, kind, segv = std::move(segv),
                        counts = std::move(counts),
                        argmax = std::move(argmax)](Node& self) {
      vn->ensure_grad();
      const int64_t n_rows = static_cast<int64_t>(segv.size());
      switch (kind) {
        case Reduce::Sum:
          for (int64_t i = 0; i < n_rows; ++i)
            for (int64_t j = 0; j < d; ++j)
              vn->grad[i * d + j] += self.grad[segv[static_cast<size_t>(i)] * d + j];
          break;
        case Reduce::Mean:
          for (int64_t i = 0; i < n_rows; ++i) {
            const int64_t s = segv[static_cast<size_t>(i)];
            const double inv = 1.0 / static_cast<double>(counts[static_cast<size_t>(s)]);
            for (int64_t j = 0; j < d; ++j)
              vn->grad[i * d + j] += self.grad[s * d + j] * inv;
          }
          break;
        case Reduce::Max:
          for (size_t sj = 0; sj < argmax.size(); ++sj)
            vn->grad[argmax[sj] * d + static_cast<int64_t>(sj) % d] +=
                self.grad[sj];
          break;
      }
    };
  }
  return Tensor(out);
}

Tensor segment_softmax(const Tensor& scores, std::span<const int64_t> seg_ids,
                       int64_t n_segments) {
  const int64_t n = scores.size();
  if (!(scores.rank() == 1 || (scores.rank() == 2 && scores.dim(1) == 1)))
    throw ShapeError("segment_softmax: scores must be [n] or [n,1], got " +
                     shape_str(scores.shape()));
  if (static_cast<int64_t>(seg_ids.size()) != n)
    throw ShapeError("segment_softmax: " + std::to_string(seg_ids.size()) +
                     " segment ids for " + std::to_string(n) + " scores");
  for (int64_t id : seg_ids)
    if (id < 0 || id >= n_segments)
      throw IndexError("segment_softmax: segment id " + std::to_string(id) +
                       " outside [0, " + std::to_string(n_segments) + ")");
  auto out = make_node("segment_softmax", scores.shape(), {scores.node()});
  const double* xp = scores.data().data();
  double* op = out->val.data();
  std::vector<double> mx(static_cast<size_t>(n_segments),
                         -std::numeric_limits<double>::infinity());
  for (int64_t i = 0; i < n; ++i) {
    const size_t s = static_cast<size_t>(seg_ids[static_cast<size_t>(i)]);
    mx[s] = std::max(mx[s], xp[i]);
  }
  std::vector<double> sum(static_cast<size_t>(n_segments), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const size_t s = static_cast<size_t>(seg_ids[static_cast<size_t>(i)]);
    op[i] = std::exp(xp[i] - mx[s]);
    sum[s] += op[i];
  }
  for (int64_t i = 0; i < n; ++i) {
    const size_t s = static_cast<size_t>(seg_ids[static_cast<size_t>(i)]);
    op[i] /= sum[s];
  }
  if (out->requires_grad) {
    Node* xn = scores.node().get();
    std::vector<int64_t> segv(seg_ids.begin(), seg_ids.end());
    out->backward_fn = [xn, n_segments, segv = std::move(segv)](Node& self) {
      xn->ensure_grad();
      std::vector<double> dot(static_cast<size_t>(n_segments), 0.0);
      const int64_t n_rows = static_cast<int64_t>(segv.size());
      for (int64_t i = 0; i < n_rows; ++i)
        dot[static_cast<size_t>(segv[static_cast<size_t>(i)])] +=
            self.grad[i] * self.val[i];
      for (int64_t i = 0; i < n_rows; ++i)
        xn->grad[i] +=
            (self.grad[i] - dot[static_cast<size_t>(segv[static_cast<size_t>(i)])]) *
            self.val[i];
    };
  }
  return Tensor(out);
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) throw ValueError("concat: no tensors given");
  const Shape& lead = parts[0].shape();
  int64_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != static_cast<int>(lead.size()))
      throw ShapeError("concat: rank mismatch");
    for (int i = 0; i + 1 < p.rank(); ++i)
      if (p.dim(i) != lead[static_cast<size_t>(i)])
        throw ShapeError("concat: leading dimensions disagree, " +
                         shape_str(p.shape()) + " vs " + shape_str(lead));
    total += p.dim(p.rank() - 1);
  }
  Shape out_shape = lead;
  out_shape.back() = total;
  auto node = std::make_shared<Node>();
  node->op = "concat";
  node->shape = out_shape;
  node->val.assign(static_cast<size_t>(shape_numel(out_shape)), 0.0);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  for (const Tensor& p : parts) {
    node->requires_grad = node->requires_grad || p.requires_grad();
    node->parents.push_back(p.node());
  }
  const int64_t rows = shape_numel(out_shape) / total;
  int64_t off = 0;
  std::vector<int64_t> widths;
  for (const Tensor& p : parts) {
    const int64_t w = p.dim(p.rank() - 1);
    widths.push_back(w);
    const double* src = p.data().data();
    for (int64_t r = 0; r < rows; ++r)
      std::copy_n(src + r * w, w, node->val.data() + r * total + off);
    off += w;
  }
  if (node->requires_grad) {
    std::vector<Node*> pnodes;
    for (const auto& p : node->parents) pnodes.push_back(p.get());
    node->backward_fn = [pnodes, widths, rows, total](Node& self) {
      int64_t off2 = 0;
      for (size_t pi = 0; pi < pnodes.size(); ++pi) {
        Node* pn = pnodes[pi];
        const int64_t w = widths[pi];
        if (pn->requires_grad) {
          pn->ensure_grad();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < w; ++j)
              pn->grad[r * w + j] += self.grad[r * total + off2 + j];
        }
        off2 += w;
      }
    };
  }
  return Tensor(node);
}

Tensor slice_last(const Tensor& x, int64_t start, int64_t len) {
  const int64_t last = x.dim(x.rank() - 1);
  if (start < 0 || len <= 0 || start + len > last)
    throw ShapeError("slice: [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") outside axis of " +
                     std::to_string(last));
  Shape out_shape = x.shape();
  out_shape.back() = len;
  auto out = make_node("slice", out_shape, {x.node()});
  const int64_t rows = x.size() / last;
  const double* xp = x.data().data();
  for (int64_t r = 0; r < rows; ++r)
    std::copy_n(xp + r * last + start, len, out->val.data() + r * len);
  if (out->requires_grad) {
    Node* xn = x.node().get();
    out->backward_fn = [xn, rows, last, start, len](Node& self) {
      xn->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < len; ++j)
          xn->grad[r * last + start + j] += self.grad[r * len + j];
    };
  }
  return Tensor(out);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  auto out = make_node("reshape", std::move(shape), {x.node()});
  out->val = x.node()->val;
  if (out->requires_grad) {
    Node* xn = x.node().get();
    out->backward_fn = [xn](Node& self) {
      xn->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        xn->grad[i] += self.grad[i];
    };
  }
  return Tensor(out);
}

Tensor sum_all(const Tensor& x) {
  auto out = make_node("sum", {1}, {x.node()});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  out->val[0] = acc;
  if (out->requires_grad) {
    Node* xn = x.node().get();
    out->backward_fn = [xn](Node& self) {
      xn->ensure_grad();
      for (double& g : xn->grad) g += self.grad[0];
    };
  }
  return Tensor(out);
}

Tensor mean_all(const Tensor& x) {
  auto out = make_node("mean", {1}, {x.node()});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  out->val[0] = acc / static_cast<double>(x.size());
  if (out->requires_grad) {
    Node* xn = x.node().get();
    const double inv = 1.0 / static_cast<double>(x.size());
    out->backward_fn = [xn, inv](Node& self) {
      xn->ensure_grad();
      for (double& g : xn->grad) g += self.grad[0] * inv;
    };
  }
  return Tensor(out);
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int64_t stride) {
  if (x.rank() != 2 || kernel.rank() != 1 || bias.size() != 1)
    throw ShapeError("conv1d: expected x [n,len], kernel [k], bias [1]");
  if (stride < 1) throw ValueError("conv1d: stride must be >= 1");
  const int64_t rows = x.dim(0), len = x.dim(1), k = kernel.dim(0);
  if (k > len)
    throw ShapeError("conv1d: kernel of " + std::to_string(k) +
                     " wider than input of " + std::to_string(len));
  const int64_t n_win = (len - k) / stride + 1;
  auto out = make_node("conv1d", {rows, n_win},
                       {x.node(), kernel.node(), bias.node()});
  kernels::conv1d(x.data().data(), kernel.data().data(), bias.data()[0],
                  out->val.data(), rows, len, k, stride, n_win);
  if (out->requires_grad) {
    Node* xn = x.node().get();
    Node* kn = kernel.node().get();
    Node* bn = bias.node().get();
    out->backward_fn = [xn, kn, bn, rows, len, k, stride, n_win](Node& self) {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t w = 0; w < n_win; ++w) {
            const double g = self.grad[r * n_win + w];
            for (int64_t j = 0; j < k; ++j)
              xn->grad[r * len + w * stride + j] += g * kn->val[j];
          }
      }
      if (kn->requires_grad) {
        kn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t w = 0; w < n_win; ++w) {
            const double g = self.grad[r * n_win + w];
            for (int64_t j = 0; j < k; ++j)
              kn->grad[j] += g * xn->val[r * len + w * stride + j];
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (double g : self.grad) bn->grad[0] += g;
      }
    };
  }
  return Tensor(out);
}

// ---- reverse mode -------------------------------------------------------------

void set_backward_sign_flip(const std::string& op_name) { g_flip_op = op_name; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw Error("backward: loss must be a defined scalar tensor");
  Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // Collect the reachable differentiable subgraph.
  std::vector<Node*> nodes;
  std::vector<Node*> stack{root};
  std::unordered_set<const Node*> seen;
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    nodes.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad) stack.push_back(p.get());
  }

  // Intermediates restart from zero; leaves keep accumulating.
  for (Node* n : nodes) {
    if (n->backward_fn) {
      n->grad.assign(n->val.size(), 0.0);
    } else {
      n->ensure_grad();
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;

  std::sort(nodes.begin(), nodes.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });
  for (Node* n : nodes) {
    if (!n->backward_fn) continue;
    if (!g_flip_op.empty() && g_flip_op == n->op)
      for (double& g : n->grad) g = -g;
    n->backward_fn(*n);
  }
}

// ---- Adam -----------------------------------------------------------------------

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(static_cast<size_t>(params[i].size()), 0.0);
      state.v[i].assign(static_cast<size_t>(params[i].size()), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: state tracks " +
                     std::to_string(state.m.size()) + " parameters, got " +
                     std::to_string(params.size()));
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (state.m[i].size() != static_cast<size_t>(p.size()))
      throw ShapeError("adam_step: parameter " + std::to_string(i) +
                       " changed size");
    if (!p.has_grad()) continue;  // no gradient accumulated: no update
    std::span<double> val = p.mutable_data();
    std::span<const double> g = p.grad();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    for (size_t j = 0; j < val.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      val[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace qor

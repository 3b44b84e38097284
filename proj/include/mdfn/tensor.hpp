#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mdfn/error.hpp"
#include "mdfn/masks.hpp"

namespace mdfn::nn {

// Every tensor in the pipeline is at most rank 2; vectors are (1, n) rows
// and scalars are (1, 1).
struct Shape {
  int rows = 0;
  int cols = 0;
  int size() const { return rows * cols; }
  bool operator==(const Shape& o) const = default;
  std::string str() const {
    return "[" + std::to_string(rows) + "," + std::to_string(cols) + "]";
  }
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> val;
  std::vector<T> grad;              // allocated only when needs_grad
  bool needs_grad = false;
  std::function<void()> back;       // empty for leaves

  void alloc(bool with_grad) {
    val.assign(static_cast<size_t>(shape.size()), T(0));
    if (with_grad) grad.assign(static_cast<size_t>(shape.size()), T(0));
  }
};

// Lightweight handle; the node is owned by a Tape or a ParamRegistry.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Node<T>* n) : n_(n) {}

  bool valid() const { return n_ != nullptr; }
  Node<T>* node() const { return n_; }
  Shape shape() const { return n_->shape; }
  int rows() const { return n_->shape.rows; }
  int cols() const { return n_->shape.cols; }
  std::vector<T>& val() const { return n_->val; }
  std::vector<T>& grad() const { return n_->grad; }
  T at(int r, int c) const {
    return n_->val[static_cast<size_t>(r) * n_->shape.cols + c];
  }
  T item() const { return n_->val[0]; }
  bool needs_grad() const { return n_->needs_grad; }

 private:
  Node<T>* n_ = nullptr;
};

// Records nodes in creation order; creation order is a topological order, so
// reverse iteration is a valid backward schedule.
template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Tensor<T> make(Shape s, bool needs_grad) {
    auto n = std::make_unique<Node<T>>();
    n->shape = s;
    n->needs_grad = needs_grad && grad_enabled_;
    n->alloc(n->needs_grad);
    Node<T>* raw = n.get();
    nodes_.push_back(std::move(n));
    return Tensor<T>(raw);
  }

  // Seeds d(loss)/d(loss) = seed and sweeps the tape in reverse. A second
  // sweep without clear() raises StaleGraph.
  void backward(Tensor<T> loss, T seed = T(1)) {
    if (backward_done_) fail(ErrorCode::StaleGraph, "backward called twice on one tape");
    if (loss.shape().size() != 1)
      fail(ErrorCode::ShapeError, "backward expects a scalar loss, got " + loss.shape().str());
    if (!loss.needs_grad())
      fail(ErrorCode::ConfigError, "loss does not require gradients");
    backward_done_ = true;
    loss.grad()[0] += seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>* n = it->get();
      if (n->needs_grad && n->back) n->back();
    }
  }

  void clear() {
    nodes_.clear();
    backward_done_ = false;
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node<T>>> nodes_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

namespace detail {

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                             const char* op) {
  if (!(a.shape() == b.shape()))
    fail(ErrorCode::ShapeError, std::string(op) + ": " + a.shape().str() +
                                    " vs " + b.shape().str());
}

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
inline void gemm_acc(const T* __restrict a, const T* __restrict b,
                     T* __restrict c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    T* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
inline void gemm_nt_acc(const T* __restrict a, const T* __restrict b,
                        T* __restrict c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    T* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<size_t>(j) * k;
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <typename T>
inline void gemm_tn_acc(const T* __restrict a, const T* __restrict b,
                        T* __restrict c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    const T* brow = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* crow = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> constant(Tape<T>& tape, Shape s, const std::vector<T>& data) {
  if (static_cast<int>(data.size()) != s.size())
    fail(ErrorCode::ShapeError, "constant: data size mismatch");
  Tensor<T> out = tape.make(s, false);
  out.val() = data;
  return out;
}

template <typename T>
Tensor<T> zeros(Tape<T>& tape, Shape s) {
  return tape.make(s, false);
}

template <typename T>
Tensor<T> add(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out = tape.make(a.shape(), a.needs_grad() || b.needs_grad());
  const int n = a.shape().size();
  for (int i = 0; i < n; ++i) out.val()[i] = a.val()[i] + b.val()[i];
  if (out.needs_grad()) {
    Node<T>*an = a.node(), *bn = b.node(), *on = out.node();
    on->back = [an, bn, on, n] {
      if (an->needs_grad)
        for (int i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      if (bn->needs_grad)
        for (int i = 0; i < n; ++i) bn->grad[i] += on->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out = tape.make(a.shape(), a.needs_grad() || b.needs_grad());
  const int n = a.shape().size();
  for (int i = 0; i < n; ++i) out.val()[i] = a.val()[i] - b.val()[i];
  if (out.needs_grad()) {
    Node<T>*an = a.node(), *bn = b.node(), *on = out.node();
    on->back = [an, bn, on, n] {
      if (an->needs_grad)
        for (int i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      if (bn->needs_grad)
        for (int i = 0; i < n; ++i) bn->grad[i] -= on->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out = tape.make(a.shape(), a.needs_grad() || b.needs_grad());
  const int n = a.shape().size();
  for (int i = 0; i < n; ++i) out.val()[i] = a.val()[i] * b.val()[i];
  if (out.needs_grad()) {
    Node<T>*an = a.node(), *bn = b.node(), *on = out.node();
    on->back = [an, bn, on, n] {
      if (an->needs_grad)
        for (int i = 0; i < n; ++i) an->grad[i] += on->grad[i] * bn->val[i];
      if (bn->needs_grad)
        for (int i = 0; i < n; ++i) bn->grad[i] += on->grad[i] * an->val[i];
    };
  }
  return out;
}

// a*x + b, elementwise with scalar coefficients.
template <typename T>
Tensor<T> affine(Tape<T>& tape, Tensor<T> x, T a, T b) {
  Tensor<T> out = tape.make(x.shape(), x.needs_grad());
  const int n = x.shape().size();
  for (int i = 0; i < n; ++i) out.val()[i] = a * x.val()[i] + b;
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *on = out.node();
    on->back = [xn, on, a, n] {
      for (int i = 0; i < n; ++i) xn->grad[i] += a * on->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, Tensor<T> x, T a) {
  return affine(tape, x, a, T(0));
}

// X[m,n] + row vector b[1,n], broadcast over rows.
template <typename T>
Tensor<T> add_rowvec(Tape<T>& tape, Tensor<T> x, Tensor<T> b) {
  if (b.rows() != 1 || b.cols() != x.cols())
    fail(ErrorCode::ShapeError, "add_rowvec: " + x.shape().str() + " + " + b.shape().str());
  Tensor<T> out = tape.make(x.shape(), x.needs_grad() || b.needs_grad());
  const int m = x.rows(), n = x.cols();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.val()[static_cast<size_t>(i) * n + j] =
          x.val()[static_cast<size_t>(i) * n + j] + b.val()[j];
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *bn = b.node(), *on = out.node();
    on->back = [xn, bn, on, m, n] {
      if (xn->needs_grad)
        for (int i = 0; i < m * n; ++i) xn->grad[i] += on->grad[i];
      if (bn->needs_grad)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            bn->grad[j] += on->grad[static_cast<size_t>(i) * n + j];
    };
  }
  return out;
}

template <typename T>
Tensor<T> matmul(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  if (a.cols() != b.rows())
    fail(ErrorCode::ShapeError, "matmul: " + a.shape().str() + " x " + b.shape().str());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> out = tape.make({m, n}, a.needs_grad() || b.needs_grad());
  detail::gemm_acc(a.val().data(), b.val().data(), out.val().data(), m, k, n);
  if (out.needs_grad()) {
    Node<T>*an = a.node(), *bn = b.node(), *on = out.node();
    on->back = [an, bn, on, m, k, n] {
      if (an->needs_grad)  // dA += dC * B^T
        detail::gemm_nt_acc(on->grad.data(), bn->val.data(), an->grad.data(), m, n, k);
      if (bn->needs_grad)  // dB += A^T * dC
        detail::gemm_tn_acc(an->val.data(), on->grad.data(), bn->grad.data(), m, k, n);
    };
  }
  return out;
}

// A[m,k] * B[n,k]^T -> [m,n]
template <typename T>
Tensor<T> matmul_nt(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
  if (a.cols() != b.cols())
    fail(ErrorCode::ShapeError, "matmul_nt: " + a.shape().str() + " x " + b.shape().str() + "^T");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  Tensor<T> out = tape.make({m, n}, a.needs_grad() || b.needs_grad());
  detail::gemm_nt_acc(a.val().data(), b.val().data(), out.val().data(), m, k, n);
  if (out.needs_grad()) {
    Node<T>*an = a.node(), *bn = b.node(), *on = out.node();
    on->back = [an, bn, on, m, k, n] {
      if (an->needs_grad)  // dA += dC * B
        detail::gemm_acc(on->grad.data(), bn->val.data(), an->grad.data(), m, n, k);
      if (bn->needs_grad)  // dB += dC^T * A
        detail::gemm_tn_acc(on->grad.data(), an->val.data(), bn->grad.data(), m, n, k);
    };
  }
  return out;
}

// matmul(x, W) + b
template <typename T>
Tensor<T> linear(Tape<T>& tape, Tensor<T> x, Tensor<T> w, Tensor<T> b) {
  return add_rowvec(tape, matmul(tape, x, w), b);
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, Tensor<T> x) {
  Tensor<T> out = tape.make(x.shape(), x.needs_grad());
  const int n = x.shape().size();
  for (int i = 0; i < n; ++i) out.val()[i] = x.val()[i] > T(0) ? x.val()[i] : T(0);
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *on = out.node();
    on->back = [xn, on, n] {
      for (int i = 0; i < n; ++i)
        if (xn->val[i] > T(0)) xn->grad[i] += on->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, Tensor<T> x) {
  Tensor<T> out = tape.make(x.shape(), x.needs_grad());
  const int n = x.shape().size();
  for (int i = 0; i < n; ++i) out.val()[i] = T(1) / (T(1) + std::exp(-x.val()[i]));
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *on = out.node();
    on->back = [xn, on, n] {
      for (int i = 0; i < n; ++i) {
        const T s = on->val[i];
        xn->grad[i] += on->grad[i] * s * (T(1) - s);
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> tanh_op(Tape<T>& tape, Tensor<T> x) {
  Tensor<T> out = tape.make(x.shape(), x.needs_grad());
  const int n = x.shape().size();
  for (int i = 0; i < n; ++i) out.val()[i] = std::tanh(x.val()[i]);
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *on = out.node();
    on->back = [xn, on, n] {
      for (int i = 0; i < n; ++i) {
        const T t = on->val[i];
        xn->grad[i] += on->grad[i] * (T(1) - t * t);
      }
    };
  }
  return out;
}

// Row-wise softmax over the mask's allowed cells. Blocked cells get exactly
// zero probability and receive no gradient; rows sum to 1. A row with no
// allowed cell raises DegenerateRow (build_masks guarantees at least the
// diagonal everywhere).
template <typename T>
Tensor<T> masked_softmax(Tape<T>& tape, Tensor<T> scores, const AttnMask& mask) {
  if (scores.rows() != mask.l || scores.cols() != mask.l)
    fail(ErrorCode::ShapeError, "masked_softmax: scores " + scores.shape().str() +
                                    " vs mask l=" + std::to_string(mask.l));
  const int l = mask.l;
  Tensor<T> out = tape.make(scores.shape(), scores.needs_grad());
  for (int i = 0; i < l; ++i) {
    const T* srow = scores.val().data() + static_cast<size_t>(i) * l;
    T* orow = out.val().data() + static_cast<size_t>(i) * l;
    const uint8_t* arow = mask.row(i);
    T mx = T(0);
    bool any = false;
    for (int j = 0; j < l; ++j) {
      if (!arow[j]) continue;
      if (!any || srow[j] > mx) mx = srow[j];
      any = true;
    }
    if (!any)
      fail(ErrorCode::DegenerateRow, "masked_softmax: row " + std::to_string(i) +
                                         " has no unmasked entry");
    T sum = T(0);
    for (int j = 0; j < l; ++j) {
      if (arow[j]) {
        orow[j] = std::exp(srow[j] - mx);
        sum += orow[j];
      } else {
        orow[j] = T(0);
      }
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < l; ++j) orow[j] *= inv;
  }
  if (out.needs_grad()) {
    Node<T>*sn = scores.node(), *on = out.node();
    on->back = [sn, on, l] {
      for (int i = 0; i < l; ++i) {
        const T* p = on->val.data() + static_cast<size_t>(i) * l;
        const T* g = on->grad.data() + static_cast<size_t>(i) * l;
        T* ds = sn->grad.data() + static_cast<size_t>(i) * l;
        T dot = T(0);
        for (int j = 0; j < l; ++j) dot += p[j] * g[j];
        for (int j = 0; j < l; ++j) ds[j] += p[j] * (g[j] - dot);
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) fail(ErrorCode::ShapeError, "concat_cols: no inputs");
  const int m = parts[0].rows();
  int total = 0;
  bool ng = false;
  for (const auto& p : parts) {
    if (p.rows() != m) fail(ErrorCode::ShapeError, "concat_cols: row mismatch");
    total += p.cols();
    ng = ng || p.needs_grad();
  }
  Tensor<T> out = tape.make({m, total}, ng);
  int off = 0;
  for (const auto& p : parts) {
    const int c = p.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < c; ++j)
        out.val()[static_cast<size_t>(i) * total + off + j] =
            p.val()[static_cast<size_t>(i) * c + j];
    off += c;
  }
  if (out.needs_grad()) {
    std::vector<Node<T>*> srcs;
    for (const auto& p : parts) srcs.push_back(p.node());
    Node<T>* on = out.node();
    on->back = [srcs, on, m, total] {
      int off2 = 0;
      for (Node<T>* s : srcs) {
        const int c = s->shape.cols;
        if (s->needs_grad)
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < c; ++j)
              s->grad[static_cast<size_t>(i) * c + j] +=
                  on->grad[static_cast<size_t>(i) * total + off2 + j];
        off2 += c;
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(Tape<T>& tape, Tensor<T> x, int c0, int c1) {
  if (c0 < 0 || c1 > x.cols() || c0 >= c1)
    fail(ErrorCode::ShapeError, "slice_cols: bad range");
  const int m = x.rows(), n = x.cols(), c = c1 - c0;
  Tensor<T> out = tape.make({m, c}, x.needs_grad());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j)
      out.val()[static_cast<size_t>(i) * c + j] =
          x.val()[static_cast<size_t>(i) * n + c0 + j];
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *on = out.node();
    on->back = [xn, on, m, n, c, c0] {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < c; ++j)
          xn->grad[static_cast<size_t>(i) * n + c0 + j] +=
              on->grad[static_cast<size_t>(i) * c + j];
    };
  }
  return out;
}

template <typename T>
Tensor<T> rows_slice(Tape<T>& tape, Tensor<T> x, int r0, int r1) {
  if (r0 < 0 || r1 > x.rows() || r0 >= r1)
    fail(ErrorCode::ShapeError, "rows_slice: bad range");
  const int n = x.cols(), m = r1 - r0;
  Tensor<T> out = tape.make({m, n}, x.needs_grad());
  for (int i = 0; i < m * n; ++i)
    out.val()[i] = x.val()[static_cast<size_t>(r0) * n + i];
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *on = out.node();
    on->back = [xn, on, m, n, r0] {
      for (int i = 0; i < m * n; ++i)
        xn->grad[static_cast<size_t>(r0) * n + i] += on->grad[i];
    };
  }
  return out;
}

// Column-wise max over rows [r0, r1) -> (1, cols). Ties keep the first row.
template <typename T>
Tensor<T> rows_max(Tape<T>& tape, Tensor<T> x, int r0, int r1) {
  if (r0 < 0 || r1 > x.rows() || r0 >= r1)
    fail(ErrorCode::ShapeError, "rows_max: bad range");
  const int n = x.cols();
  Tensor<T> out = tape.make({1, n}, x.needs_grad());
  std::vector<int> arg(static_cast<size_t>(n), r0);
  for (int j = 0; j < n; ++j) {
    T best = x.val()[static_cast<size_t>(r0) * n + j];
    for (int i = r0 + 1; i < r1; ++i) {
      const T v = x.val()[static_cast<size_t>(i) * n + j];
      if (v > best) {
        best = v;
        arg[static_cast<size_t>(j)] = i;
      }
    }
    out.val()[j] = best;
  }
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *on = out.node();
    on->back = [xn, on, arg, n] {
      for (int j = 0; j < n; ++j)
        xn->grad[static_cast<size_t>(arg[static_cast<size_t>(j)]) * n + j] +=
            on->grad[j];
    };
  }
  return out;
}

template <typename T>
Tensor<T> rows_mean(Tape<T>& tape, Tensor<T> x, int r0, int r1) {
  if (r0 < 0 || r1 > x.rows() || r0 >= r1)
    fail(ErrorCode::ShapeError, "rows_mean: bad range");
  const int n = x.cols();
  const T inv = T(1) / static_cast<T>(r1 - r0);
  Tensor<T> out = tape.make({1, n}, x.needs_grad());
  for (int j = 0; j < n; ++j) {
    T s = T(0);
    for (int i = r0; i < r1; ++i) s += x.val()[static_cast<size_t>(i) * n + j];
    out.val()[j] = s * inv;
  }
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *on = out.node();
    on->back = [xn, on, r0, r1, n, inv] {
      for (int j = 0; j < n; ++j)
        for (int i = r0; i < r1; ++i)
          xn->grad[static_cast<size_t>(i) * n + j] += on->grad[j] * inv;
    };
  }
  return out;
}

// Concatenate along rows.
template <typename T>
Tensor<T> stack_rows(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) fail(ErrorCode::ShapeError, "stack_rows: no inputs");
  const int n = parts[0].cols();
  int total = 0;
  bool ng = false;
  for (const auto& p : parts) {
    if (p.cols() != n) fail(ErrorCode::ShapeError, "stack_rows: col mismatch");
    total += p.rows();
    ng = ng || p.needs_grad();
  }
  Tensor<T> out = tape.make({total, n}, ng);
  int off = 0;
  for (const auto& p : parts) {
    const int sz = p.shape().size();
    for (int i = 0; i < sz; ++i)
      out.val()[static_cast<size_t>(off) * n + i] = p.val()[i];
    off += p.rows();
  }
  if (out.needs_grad()) {
    std::vector<Node<T>*> srcs;
    for (const auto& p : parts) srcs.push_back(p.node());
    Node<T>* on = out.node();
    on->back = [srcs, on, n] {
      int off2 = 0;
      for (Node<T>* s : srcs) {
        const int sz = s->shape.size();
        if (s->needs_grad)
          for (int i = 0; i < sz; ++i)
            s->grad[i] += on->grad[static_cast<size_t>(off2) * n + i];
        off2 += s->shape.rows;
      }
    };
  }
  return out;
}

// Gather rows of table by id; backward scatter-adds into the table.
template <typename T>
Tensor<T> embed_rows(Tape<T>& tape, Tensor<T> table, const std::vector<int>& ids) {
  const int v = table.rows(), d = table.cols();
  const int l = static_cast<int>(ids.size());
  for (int id : ids)
    if (id < 0 || id >= v)
      fail(ErrorCode::ShapeError, "embed_rows: id " + std::to_string(id) +
                                      " out of range for table rows " + std::to_string(v));
  Tensor<T> out = tape.make({l, d}, table.needs_grad());
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < d; ++j)
      out.val()[static_cast<size_t>(i) * d + j] =
          table.val()[static_cast<size_t>(ids[static_cast<size_t>(i)]) * d + j];
  if (out.needs_grad()) {
    Node<T>*tn = table.node(), *on = out.node();
    on->back = [tn, on, ids, l, d] {
      for (int i = 0; i < l; ++i)
        for (int j = 0; j < d; ++j)
          tn->grad[static_cast<size_t>(ids[static_cast<size_t>(i)]) * d + j] +=
              on->grad[static_cast<size_t>(i) * d + j];
    };
  }
  return out;
}

// Per-row layer normalization with affine parameters gamma, beta (1, d).
template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, Tensor<T> x, Tensor<T> gamma, Tensor<T> beta,
                     T eps = T(1e-5)) {
  const int m = x.rows(), d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    fail(ErrorCode::ShapeError, "layer_norm: parameter shape mismatch");
  Tensor<T> out = tape.make(x.shape(),
                            x.needs_grad() || gamma.needs_grad() || beta.needs_grad());
  std::vector<T> inv_std(static_cast<size_t>(m));
  std::vector<T> xhat(static_cast<size_t>(m) * d);
  for (int i = 0; i < m; ++i) {
    const T* xr = x.val().data() + static_cast<size_t>(i) * d;
    T mu = T(0);
    for (int j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = inv;
    for (int j = 0; j < d; ++j) {
      const T h = (xr[j] - mu) * inv;
      xhat[static_cast<size_t>(i) * d + j] = h;
      out.val()[static_cast<size_t>(i) * d + j] = h * gamma.val()[j] + beta.val()[j];
    }
  }
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *gn = gamma.node(), *bn = beta.node(), *on = out.node();
    on->back = [xn, gn, bn, on, inv_std, xhat, m, d] {
      for (int i = 0; i < m; ++i) {
        const T* dy = on->grad.data() + static_cast<size_t>(i) * d;
        const T* xh = xhat.data() + static_cast<size_t>(i) * d;
        if (gn->needs_grad)
          for (int j = 0; j < d; ++j) gn->grad[j] += dy[j] * xh[j];
        if (bn->needs_grad)
          for (int j = 0; j < d; ++j) bn->grad[j] += dy[j];
        if (xn->needs_grad) {
          T mean_g = T(0), mean_gx = T(0);
          std::vector<T> gh(static_cast<size_t>(d));
          for (int j = 0; j < d; ++j) {
            gh[static_cast<size_t>(j)] = dy[j] * gn->val[j];
            mean_g += gh[static_cast<size_t>(j)];
            mean_gx += gh[static_cast<size_t>(j)] * xh[j];
          }
          mean_g /= static_cast<T>(d);
          mean_gx /= static_cast<T>(d);
          const T inv = inv_std[static_cast<size_t>(i)];
          T* dx = xn->grad.data() + static_cast<size_t>(i) * d;
          for (int j = 0; j < d; ++j)
            dx[j] += inv * (gh[static_cast<size_t>(j)] - mean_g - xh[j] * mean_gx);
        }
      }
    };
  }
  return out;
}

// 1-D convolution over rows with same padding (zeros), stride 1.
// X is [n, ci]; the kernel is stored flattened as [w*ci, co] with row
// t*ci + c holding tap t of input channel c; b is (1, co).
template <typename T>
Tensor<T> conv1d_same(Tape<T>& tape, Tensor<T> x, Tensor<T> w, Tensor<T> b,
                      int width) {
  const int n = x.rows(), ci = x.cols();
  if (w.rows() != width * ci)
    fail(ErrorCode::ShapeError, "conv1d_same: kernel rows " + std::to_string(w.rows()) +
                                    " != width*ci " + std::to_string(width * ci));
  const int co = w.cols();
  if (b.rows() != 1 || b.cols() != co)
    fail(ErrorCode::ShapeError, "conv1d_same: bias shape mismatch");
  const int offset = (width - 1) / 2;
  Tensor<T> out = tape.make({n, co},
                            x.needs_grad() || w.needs_grad() || b.needs_grad());
  for (int p = 0; p < n; ++p) {
    T* orow = out.val().data() + static_cast<size_t>(p) * co;
    for (int o = 0; o < co; ++o) orow[o] = b.val()[o];
    for (int t = 0; t < width; ++t) {
      const int q = p + t - offset;
      if (q < 0 || q >= n) continue;
      const T* xrow = x.val().data() + static_cast<size_t>(q) * ci;
      for (int c = 0; c < ci; ++c) {
        const T xv = xrow[c];
        if (xv == T(0)) continue;
        const T* wrow = w.val().data() + static_cast<size_t>(t * ci + c) * co;
        for (int o = 0; o < co; ++o) orow[o] += xv * wrow[o];
      }
    }
  }
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *wn = w.node(), *bn = b.node(), *on = out.node();
    on->back = [xn, wn, bn, on, n, ci, co, width, offset] {
      for (int p = 0; p < n; ++p) {
        const T* dy = on->grad.data() + static_cast<size_t>(p) * co;
        if (bn->needs_grad)
          for (int o = 0; o < co; ++o) bn->grad[o] += dy[o];
        for (int t = 0; t < width; ++t) {
          const int q = p + t - offset;
          if (q < 0 || q >= n) continue;
          for (int c = 0; c < ci; ++c) {
            const T* wrow = wn->val.data() + static_cast<size_t>(t * ci + c) * co;
            const T xv = xn->val[static_cast<size_t>(q) * ci + c];
            if (xn->needs_grad) {
              T acc = T(0);
              for (int o = 0; o < co; ++o) acc += dy[o] * wrow[o];
              xn->grad[static_cast<size_t>(q) * ci + c] += acc;
            }
            if (wn->needs_grad) {
              T* dw = wn->grad.data() + static_cast<size_t>(t * ci + c) * co;
              for (int o = 0; o < co; ++o) dw[o] += dy[o] * xv;
            }
          }
        }
      }
    };
  }
  return out;
}

// Cross entropy of a softmax over one row of logits against a target index.
template <typename T>
Tensor<T> softmax_xent(Tape<T>& tape, Tensor<T> logits, int target) {
  if (logits.rows() != 1)
    fail(ErrorCode::ShapeError, "softmax_xent: expected a (1,C) logit row");
  const int c = logits.cols();
  if (target < 0 || target >= c)
    fail(ErrorCode::ConfigError, "softmax_xent: target out of range");
  T mx = logits.val()[0];
  for (int j = 1; j < c; ++j) mx = std::max(mx, logits.val()[j]);
  T sum = T(0);
  std::vector<T> p(static_cast<size_t>(c));
  for (int j = 0; j < c; ++j) {
    p[static_cast<size_t>(j)] = std::exp(logits.val()[j] - mx);
    sum += p[static_cast<size_t>(j)];
  }
  for (int j = 0; j < c; ++j) p[static_cast<size_t>(j)] /= sum;
  Tensor<T> out = tape.make({1, 1}, logits.needs_grad());
  out.val()[0] = std::log(sum) - (logits.val()[target] - mx);
  if (out.needs_grad()) {
    Node<T>*ln = logits.node(), *on = out.node();
    on->back = [ln, on, p, target, c] {
      const T g = on->grad[0];
      for (int j = 0; j < c; ++j)
        ln->grad[j] += g * (p[static_cast<size_t>(j)] - (j == target ? T(1) : T(0)));
    };
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(Tape<T>& tape, Tensor<T> x) {
  Tensor<T> out = tape.make({1, 1}, x.needs_grad());
  T s = T(0);
  for (T v : x.val()) s += v;
  out.val()[0] = s;
  if (out.needs_grad()) {
    Node<T>*xn = x.node(), *on = out.node();
    const int n = x.shape().size();
    on->back = [xn, on, n] {
      for (int i = 0; i < n; ++i) xn->grad[i] += on->grad[0];
    };
  }
  return out;
}

// Softmax over one row; plain (unmasked) variant used for scoring outputs.
template <typename T>
std::vector<T> softmax_values(const std::vector<T>& logits) {
  T mx = logits[0];
  for (T v : logits) mx = std::max(mx, v);
  T sum = T(0);
  std::vector<T> p(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

}  // namespace mdfn::nn

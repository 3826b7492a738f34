#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "natlab/tensor.hpp"

namespace natlab {

// Reverse-mode autodiff over dense tensors.
//
// Ops execute eagerly: the forward value is computed immediately and, when
// the tape is recording, a backward closure is appended. Creation order is
// therefore a topological order of the data flow, and backward() is a single
// reverse sweep visiting each recorded op exactly once. Gradients always
// accumulate (+=) so a node feeding several consumers — e.g. an embedding
// table looked up by both masked views of a target — collects every
// contribution.

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient first reaches this node
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
};

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
std::vector<T>& ensure_grad(Node<T>& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

// Gradient of a node, as zeros if nothing ever flowed into it.
template <class T>
TensorData<T> grad_of(const Node<T>& n) {
  TensorData<T> out(n.shape);
  if (!n.grad.empty()) out.v = n.grad;
  return out;
}

template <class T>
class Tape {
public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  size_t recorded_ops() const { return nodes_.size(); }

  NodePtr<T> leaf(TensorData<T> data, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(data.shape);
    n->value = std::move(data.v);
    n->requires_grad = grad_enabled_ && requires_grad;
    return n;
  }

  NodePtr<T> constant(TensorData<T> data) { return leaf(std::move(data), false); }

  NodePtr<T> fresh(Shape shape) {
    auto n = std::make_shared<Node<T>>();
    n->value.resize(static_cast<size_t>(numel(shape)));
    n->shape = std::move(shape);
    return n;
  }

  bool recording(const NodePtr<T>& a) const { return grad_enabled_ && a->requires_grad; }
  bool recording(const NodePtr<T>& a, const NodePtr<T>& b) const {
    return grad_enabled_ && (a->requires_grad || b->requires_grad);
  }
  bool recording(const NodePtr<T>& a, const NodePtr<T>& b, const NodePtr<T>& c) const {
    return grad_enabled_ && (a->requires_grad || b->requires_grad || c->requires_grad);
  }

  void attach(const NodePtr<T>& out, std::function<void(Node<T>&)> backward) {
    out->requires_grad = true;
    out->backward = std::move(backward);
    nodes_.push_back(out);
  }

  // Single reverse sweep from a scalar root. Each recorded op is visited
  // once, in anti-topological (reverse creation) order; ops recorded after
  // the root cannot influence it and are skipped.
  void backward(const NodePtr<T>& root) {
    check(grad_enabled_, "backward() called on a non-recording tape");
    check(root->size() == 1, "backward() root must be scalar, got shape ", shape_str(root->shape));
    ensure_grad(*root)[0] = T(1);
    size_t i = nodes_.size();
    while (i > 0 && nodes_[i - 1] != root) --i;
    for (; i > 0; --i) {
      Node<T>& n = *nodes_[i - 1];
      if (n.requires_grad && n.backward && !n.grad.empty()) n.backward(n);
    }
  }

private:
  bool grad_enabled_;
  std::vector<NodePtr<T>> nodes_;
};

namespace detail {

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using EMap = Eigen::Map<EMat<T>>;
template <class T>
using ECMap = Eigen::Map<const EMat<T>>;

// c = op(a) * op(b) with a physical (ar x ac), b physical (br x bc).
template <class T>
void gemm(const T* a, int ar, int ac, bool ta, const T* b, int br, int bc, bool tb, T* c,
          bool accumulate) {
  ECMap<T> A(a, ar, ac);
  ECMap<T> B(b, br, bc);
  const int m = ta ? ac : ar;
  const int n = tb ? br : bc;
  EMap<T> C(c, m, n);
  if (!ta && !tb) {
    accumulate ? void(C.noalias() += A * B) : void(C.noalias() = A * B);
  } else if (ta && !tb) {
    accumulate ? void(C.noalias() += A.transpose() * B) : void(C.noalias() = A.transpose() * B);
  } else if (!ta && tb) {
    accumulate ? void(C.noalias() += A * B.transpose()) : void(C.noalias() = A * B.transpose());
  } else {
    accumulate ? void(C.noalias() += A.transpose() * B.transpose())
               : void(C.noalias() = A.transpose() * B.transpose());
  }
}

inline void bounds_2d(const Shape& s, const char* op) {
  check(s.size() == 2, op, ": expected a 2-d tensor, got shape ", shape_str(s));
}

// Decompose shape around `axis` into (outer, n, inner) lanes.
struct AxisLanes {
  int64_t outer, n, inner;
};
inline AxisLanes lanes(const Shape& s, int axis, const char* op) {
  check(axis >= 0 && axis < static_cast<int>(s.size()), op, ": axis ", axis,
        " out of range for shape ", shape_str(s));
  AxisLanes l{1, s[static_cast<size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) l.outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) l.inner *= s[i];
  return l;
}

}  // namespace detail

// ---- element-wise ----

template <class T>
NodePtr<T> add(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b) {
  check(a->shape == b->shape, "add: shape mismatch ", shape_str(a->shape), " vs ",
        shape_str(b->shape));
  auto out = tape.fresh(a->shape);
  const int64_t n = out->size();
  for (int64_t i = 0; i < n; ++i) out->value[i] = a->value[i] + b->value[i];
  if (tape.recording(a, b)) {
    tape.attach(out, [a, b](Node<T>& o) {
      if (a->requires_grad) {
        auto& g = ensure_grad(*a);
        for (int64_t i = 0; i < o.size(); ++i) g[i] += o.grad[i];
      }
      if (b->requires_grad) {
        auto& g = ensure_grad(*b);
        for (int64_t i = 0; i < o.size(); ++i) g[i] += o.grad[i];
      }
    });
  }
  return out;
}

template <class T>
NodePtr<T> sub(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b) {
  check(a->shape == b->shape, "sub: shape mismatch ", shape_str(a->shape), " vs ",
        shape_str(b->shape));
  auto out = tape.fresh(a->shape);
  const int64_t n = out->size();
  for (int64_t i = 0; i < n; ++i) out->value[i] = a->value[i] - b->value[i];
  if (tape.recording(a, b)) {
    tape.attach(out, [a, b](Node<T>& o) {
      if (a->requires_grad) {
        auto& g = ensure_grad(*a);
        for (int64_t i = 0; i < o.size(); ++i) g[i] += o.grad[i];
      }
      if (b->requires_grad) {
        auto& g = ensure_grad(*b);
        for (int64_t i = 0; i < o.size(); ++i) g[i] -= o.grad[i];
      }
    });
  }
  return out;
}

template <class T>
NodePtr<T> mul(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b) {
  check(a->shape == b->shape, "mul: shape mismatch ", shape_str(a->shape), " vs ",
        shape_str(b->shape));
  auto out = tape.fresh(a->shape);
  const int64_t n = out->size();
  for (int64_t i = 0; i < n; ++i) out->value[i] = a->value[i] * b->value[i];
  if (tape.recording(a, b)) {
    tape.attach(out, [a, b](Node<T>& o) {
      if (a->requires_grad) {
        auto& g = ensure_grad(*a);
        for (int64_t i = 0; i < o.size(); ++i) g[i] += o.grad[i] * b->value[i];
      }
      if (b->requires_grad) {
        auto& g = ensure_grad(*b);
        for (int64_t i = 0; i < o.size(); ++i) g[i] += o.grad[i] * a->value[i];
      }
    });
  }
  return out;
}

template <class T>
NodePtr<T> scale(Tape<T>& tape, const NodePtr<T>& a, T c) {
  auto out = tape.fresh(a->shape);
  const int64_t n = out->size();
  for (int64_t i = 0; i < n; ++i) out->value[i] = a->value[i] * c;
  if (tape.recording(a)) {
    tape.attach(out, [a, c](Node<T>& o) {
      auto& g = ensure_grad(*a);
      for (int64_t i = 0; i < o.size(); ++i) g[i] += o.grad[i] * c;
    });
  }
  return out;
}

template <class T>
NodePtr<T> gelu(Tape<T>& tape, const NodePtr<T>& x) {
  auto out = tape.fresh(x->shape);
  const int64_t n = out->size();
  for (int64_t i = 0; i < n; ++i) {
    const T v = x->value[i];
    out->value[i] = T(0.5) * v * (T(1) + std::erf(v * T(0.7071067811865475)));
  }
  if (tape.recording(x)) {
    tape.attach(out, [x](Node<T>& o) {
      auto& g = ensure_grad(*x);
      for (int64_t i = 0; i < o.size(); ++i) {
        const T v = x->value[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * T(0.7071067811865475)));
        const T pdf = std::exp(T(-0.5) * v * v) * T(0.3989422804014327);
        g[i] += o.grad[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

template <class T>
NodePtr<T> exp(Tape<T>& tape, const NodePtr<T>& x) {
  auto out = tape.fresh(x->shape);
  const int64_t n = out->size();
  for (int64_t i = 0; i < n; ++i) out->value[i] = std::exp(x->value[i]);
  if (tape.recording(x)) {
    tape.attach(out, [x](Node<T>& o) {
      auto& g = ensure_grad(*x);
      for (int64_t i = 0; i < o.size(); ++i) g[i] += o.grad[i] * o.value[i];
    });
  }
  return out;
}

// x: [..., d] plus bias [d], broadcast over leading dims.
template <class T>
NodePtr<T> add_bias(Tape<T>& tape, const NodePtr<T>& x, const NodePtr<T>& b) {
  check(b->shape.size() == 1 && !x->shape.empty() && x->shape.back() == b->shape[0],
        "add_bias: shape mismatch ", shape_str(x->shape), " vs ", shape_str(b->shape));
  auto out = tape.fresh(x->shape);
  const int64_t d = b->size();
  const int64_t rows = out->size() / d;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j) out->value[r * d + j] = x->value[r * d + j] + b->value[j];
  if (tape.recording(x, b)) {
    tape.attach(out, [x, b, rows, d](Node<T>& o) {
      if (x->requires_grad) {
        auto& g = ensure_grad(*x);
        for (int64_t i = 0; i < o.size(); ++i) g[i] += o.grad[i];
      }
      if (b->requires_grad) {
        auto& g = ensure_grad(*b);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < d; ++j) g[j] += o.grad[r * d + j];
      }
    });
  }
  return out;
}

// ---- linear algebra ----

template <class T>
NodePtr<T> matmul(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b, bool ta = false,
                  bool tb = false) {
  detail::bounds_2d(a->shape, "matmul");
  detail::bounds_2d(b->shape, "matmul");
  const int ar = a->shape[0], ac = a->shape[1], br = b->shape[0], bc = b->shape[1];
  const int m = ta ? ac : ar, k = ta ? ar : ac;
  const int kb = tb ? bc : br, n = tb ? br : bc;
  check(k == kb, "matmul: inner dimensions disagree, ", shape_str(a->shape), (ta ? "^T" : ""),
        " vs ", shape_str(b->shape), (tb ? "^T" : ""));
  auto out = tape.fresh({m, n});
  detail::gemm(a->value.data(), ar, ac, ta, b->value.data(), br, bc, tb, out->value.data(), false);
  if (tape.recording(a, b)) {
    tape.attach(out, [a, b, ta, tb, m, n](Node<T>& o) {
      const int ar = a->shape[0], ac = a->shape[1], br = b->shape[0], bc = b->shape[1];
      if (a->requires_grad) {
        auto& g = ensure_grad(*a);
        // dA for C = op(A)op(B): see the four transpose cases.
        if (!ta && !tb)
          detail::gemm(o.grad.data(), m, n, false, b->value.data(), br, bc, true, g.data(), true);
        else if (!ta && tb)
          detail::gemm(o.grad.data(), m, n, false, b->value.data(), br, bc, false, g.data(), true);
        else if (ta && !tb)
          detail::gemm(b->value.data(), br, bc, false, o.grad.data(), m, n, true, g.data(), true);
        else
          detail::gemm(b->value.data(), br, bc, true, o.grad.data(), m, n, true, g.data(), true);
      }
      if (b->requires_grad) {
        auto& g = ensure_grad(*b);
        if (!ta && !tb)
          detail::gemm(a->value.data(), ar, ac, true, o.grad.data(), m, n, false, g.data(), true);
        else if (ta && !tb)
          detail::gemm(a->value.data(), ar, ac, false, o.grad.data(), m, n, false, g.data(), true);
        else if (!ta && tb)
          detail::gemm(o.grad.data(), m, n, true, a->value.data(), ar, ac, false, g.data(), true);
        else
          detail::gemm(o.grad.data(), m, n, true, a->value.data(), ar, ac, true, g.data(), true);
      }
    });
  }
  return out;
}

// Batched matmul over matching leading dim: [N,r,k] x [N,k,c].
template <class T>
NodePtr<T> bmm(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b, bool ta = false,
               bool tb = false) {
  check(a->shape.size() == 3 && b->shape.size() == 3 && a->shape[0] == b->shape[0],
        "bmm: expected matching 3-d batches, got ", shape_str(a->shape), " vs ",
        shape_str(b->shape));
  const int N = a->shape[0];
  const int ar = a->shape[1], ac = a->shape[2], br = b->shape[1], bc = b->shape[2];
  const int m = ta ? ac : ar, k = ta ? ar : ac;
  const int kb = tb ? bc : br, n = tb ? br : bc;
  check(k == kb, "bmm: inner dimensions disagree, ", shape_str(a->shape), (ta ? "^T" : ""), " vs ",
        shape_str(b->shape), (tb ? "^T" : ""));
  auto out = tape.fresh({N, m, n});
  const int64_t sa = int64_t(ar) * ac, sb = int64_t(br) * bc, so = int64_t(m) * n;
  for (int i = 0; i < N; ++i)
    detail::gemm(a->value.data() + i * sa, ar, ac, ta, b->value.data() + i * sb, br, bc, tb,
                 out->value.data() + i * so, false);
  if (tape.recording(a, b)) {
    tape.attach(out, [a, b, ta, tb, N, m, n, sa, sb, so](Node<T>& o) {
      const int ar = a->shape[1], ac = a->shape[2], br = b->shape[1], bc = b->shape[2];
      for (int i = 0; i < N; ++i) {
        const T* gv = o.grad.data() + i * so;
        const T* av = a->value.data() + i * sa;
        const T* bv = b->value.data() + i * sb;
        if (a->requires_grad) {
          T* g = ensure_grad(*a).data() + i * sa;
          if (!ta && !tb)
            detail::gemm(gv, m, n, false, bv, br, bc, true, g, true);
          else if (!ta && tb)
            detail::gemm(gv, m, n, false, bv, br, bc, false, g, true);
          else if (ta && !tb)
            detail::gemm(bv, br, bc, false, gv, m, n, true, g, true);
          else
            detail::gemm(bv, br, bc, true, gv, m, n, true, g, true);
        }
        if (b->requires_grad) {
          T* g = ensure_grad(*b).data() + i * sb;
          if (!ta && !tb)
            detail::gemm(av, ar, ac, true, gv, m, n, false, g, true);
          else if (ta && !tb)
            detail::gemm(av, ar, ac, false, gv, m, n, false, g, true);
          else if (!ta && tb)
            detail::gemm(gv, m, n, true, av, ar, ac, false, g, true);
          else
            detail::gemm(gv, m, n, true, av, ar, ac, true, g, true);
        }
      }
    });
  }
  return out;
}

template <class T>
NodePtr<T> transpose(Tape<T>& tape, const NodePtr<T>& a) {
  detail::bounds_2d(a->shape, "transpose");
  const int r = a->shape[0], c = a->shape[1];
  auto out = tape.fresh({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out->value[int64_t(j) * r + i] = a->value[int64_t(i) * c + j];
  if (tape.recording(a)) {
    tape.attach(out, [a, r, c](Node<T>& o) {
      auto& g = ensure_grad(*a);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) g[int64_t(i) * c + j] += o.grad[int64_t(j) * r + i];
    });
  }
  return out;
}

template <class T>
NodePtr<T> reshape(Tape<T>& tape, const NodePtr<T>& a, Shape shape) {
  check(numel(shape) == a->size(), "reshape: cannot view ", shape_str(a->shape), " as ",
        shape_str(shape));
  auto out = tape.fresh(shape);
  out->value = a->value;
  if (tape.recording(a)) {
    tape.attach(out, [a](Node<T>& o) {
      auto& g = ensure_grad(*a);
      for (int64_t i = 0; i < o.size(); ++i) g[i] += o.grad[i];
    });
  }
  return out;
}

// ---- gathers ----

namespace detail {
template <class T, class I>
NodePtr<T> gather_rows_impl(Tape<T>& tape, const NodePtr<T>& x, std::vector<I> rows,
                            const char* op) {
  bounds_2d(x->shape, op);
  const int64_t R = x->shape[0], C = x->shape[1];
  for (I r : rows)
    check(r >= 0 && static_cast<int64_t>(r) < R, op, ": row index ", r, " out of range [0, ", R,
          ")");
  auto out = tape.fresh({static_cast<int>(rows.size()), static_cast<int>(C)});
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x->value.data() + static_cast<int64_t>(rows[i]) * C, C,
                out->value.data() + static_cast<int64_t>(i) * C);
  if (tape.recording(x)) {
    tape.attach(out, [x, rows = std::move(rows), C](Node<T>& o) {
      auto& g = ensure_grad(*x);
      // Scatter-add: repeated indices accumulate.
      for (size_t i = 0; i < rows.size(); ++i) {
        T* dst = g.data() + static_cast<int64_t>(rows[i]) * C;
        const T* src = o.grad.data() + static_cast<int64_t>(i) * C;
        for (int64_t j = 0; j < C; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}
}  // namespace detail

// Embedding lookup: table [V, d], ids -> [n, d].
template <class T>
NodePtr<T> embed_lookup(Tape<T>& tape, const NodePtr<T>& table, std::vector<int32_t> ids) {
  return detail::gather_rows_impl(tape, table, std::move(ids), "embed_lookup");
}

// Row gather on activations: x [R, C], rows -> [n, C].
template <class T>
NodePtr<T> gather_rows(Tape<T>& tape, const NodePtr<T>& x, std::vector<int64_t> rows) {
  return detail::gather_rows_impl(tape, x, std::move(rows), "gather_rows");
}

// Element gather: x [R, C], (row, col) pairs -> [n].
template <class T>
NodePtr<T> gather_elems(Tape<T>& tape, const NodePtr<T>& x,
                        std::vector<std::pair<int64_t, int64_t>> at) {
  detail::bounds_2d(x->shape, "gather_elems");
  const int64_t R = x->shape[0], C = x->shape[1];
  for (auto [r, c] : at)
    check(r >= 0 && r < R && c >= 0 && c < C, "gather_elems: index (", r, ", ", c,
          ") out of range for shape ", shape_str(x->shape));
  auto out = tape.fresh({static_cast<int>(at.size())});
  for (size_t i = 0; i < at.size(); ++i) out->value[i] = x->value[at[i].first * C + at[i].second];
  if (tape.recording(x)) {
    tape.attach(out, [x, at = std::move(at), C](Node<T>& o) {
      auto& g = ensure_grad(*x);
      for (size_t i = 0; i < at.size(); ++i) g[at[i].first * C + at[i].second] += o.grad[i];
    });
  }
  return out;
}

// ---- reductions ----

template <class T>
NodePtr<T> row_sum(Tape<T>& tape, const NodePtr<T>& x) {
  detail::bounds_2d(x->shape, "row_sum");
  const int64_t r = x->shape[0], c = x->shape[1];
  auto out = tape.fresh({static_cast<int>(r)});
  for (int64_t i = 0; i < r; ++i) {
    T s = T(0);
    for (int64_t j = 0; j < c; ++j) s += x->value[i * c + j];
    out->value[i] = s;
  }
  if (tape.recording(x)) {
    tape.attach(out, [x, r, c](Node<T>& o) {
      auto& g = ensure_grad(*x);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) g[i * c + j] += o.grad[i];
    });
  }
  return out;
}

template <class T>
NodePtr<T> sum_all(Tape<T>& tape, const NodePtr<T>& x) {
  auto out = tape.fresh({1});
  T s = T(0);
  for (int64_t i = 0; i < x->size(); ++i) s += x->value[i];
  out->value[0] = s;
  if (tape.recording(x)) {
    tape.attach(out, [x](Node<T>& o) {
      auto& g = ensure_grad(*x);
      for (int64_t i = 0; i < x->size(); ++i) g[i] += o.grad[0];
    });
  }
  return out;
}

// Dot with a constant weight vector; the workhorse behind per-sentence
// normalizers (each row weighted by 1/|positions| etc.).
template <class T>
NodePtr<T> weighted_sum(Tape<T>& tape, const NodePtr<T>& v, std::vector<T> weights) {
  check(v->shape.size() == 1 && v->size() == static_cast<int64_t>(weights.size()),
        "weighted_sum: shape mismatch ", shape_str(v->shape), " vs [",
        weights.size(), "]");
  auto out = tape.fresh({1});
  T s = T(0);
  for (size_t i = 0; i < weights.size(); ++i) s += v->value[i] * weights[i];
  out->value[0] = s;
  if (tape.recording(v)) {
    tape.attach(out, [v, weights = std::move(weights)](Node<T>& o) {
      auto& g = ensure_grad(*v);
      for (size_t i = 0; i < weights.size(); ++i) g[i] += o.grad[0] * weights[i];
    });
  }
  return out;
}

// ---- normalizations ----

// Stable log-softmax along `axis` (max subtraction, log-sum-exp in double).
template <class T>
NodePtr<T> log_softmax(Tape<T>& tape, const NodePtr<T>& x, int axis) {
  const auto L = detail::lanes(x->shape, axis, "log_softmax");
  auto out = tape.fresh(x->shape);
  for (int64_t o = 0; o < L.outer; ++o) {
    for (int64_t in = 0; in < L.inner; ++in) {
      const int64_t base = o * L.n * L.inner + in;
      T mx = x->value[base];
      for (int64_t j = 1; j < L.n; ++j) mx = std::max(mx, x->value[base + j * L.inner]);
      double lse = 0.0;
      for (int64_t j = 0; j < L.n; ++j)
        lse += std::exp(static_cast<double>(x->value[base + j * L.inner] - mx));
      const T logz = mx + static_cast<T>(std::log(lse));
      for (int64_t j = 0; j < L.n; ++j)
        out->value[base + j * L.inner] = x->value[base + j * L.inner] - logz;
    }
  }
  if (tape.recording(x)) {
    tape.attach(out, [x, L](Node<T>& o) {
      auto& g = ensure_grad(*x);
      for (int64_t ou = 0; ou < L.outer; ++ou) {
        for (int64_t in = 0; in < L.inner; ++in) {
          const int64_t base = ou * L.n * L.inner + in;
          T gsum = T(0);
          for (int64_t j = 0; j < L.n; ++j) gsum += o.grad[base + j * L.inner];
          for (int64_t j = 0; j < L.n; ++j) {
            const int64_t k = base + j * L.inner;
            g[k] += o.grad[k] - std::exp(o.value[k]) * gsum;
          }
        }
      }
    });
  }
  return out;
}

template <class T>
NodePtr<T> softmax(Tape<T>& tape, const NodePtr<T>& x, int axis) {
  const auto L = detail::lanes(x->shape, axis, "softmax");
  auto out = tape.fresh(x->shape);
  for (int64_t o = 0; o < L.outer; ++o) {
    for (int64_t in = 0; in < L.inner; ++in) {
      const int64_t base = o * L.n * L.inner + in;
      T mx = x->value[base];
      for (int64_t j = 1; j < L.n; ++j) mx = std::max(mx, x->value[base + j * L.inner]);
      double z = 0.0;
      for (int64_t j = 0; j < L.n; ++j) {
        const T e = std::exp(x->value[base + j * L.inner] - mx);
        out->value[base + j * L.inner] = e;
        z += static_cast<double>(e);
      }
      const T inv = static_cast<T>(1.0 / z);
      for (int64_t j = 0; j < L.n; ++j) out->value[base + j * L.inner] *= inv;
    }
  }
  if (tape.recording(x)) {
    tape.attach(out, [x, L](Node<T>& o) {
      auto& g = ensure_grad(*x);
      for (int64_t ou = 0; ou < L.outer; ++ou) {
        for (int64_t in = 0; in < L.inner; ++in) {
          const int64_t base = ou * L.n * L.inner + in;
          T dot = T(0);
          for (int64_t j = 0; j < L.n; ++j) {
            const int64_t k = base + j * L.inner;
            dot += o.grad[k] * o.value[k];
          }
          for (int64_t j = 0; j < L.n; ++j) {
            const int64_t k = base + j * L.inner;
            g[k] += o.value[k] * (o.grad[k] - dot);
          }
        }
      }
    });
  }
  return out;
}

// Layer normalization over the last axis with learned gain/bias.
template <class T>
NodePtr<T> layer_norm(Tape<T>& tape, const NodePtr<T>& x, const NodePtr<T>& gain,
                      const NodePtr<T>& bias, T eps = T(1e-5)) {
  check(!x->shape.empty() && gain->shape.size() == 1 && bias->shape.size() == 1 &&
            gain->shape[0] == x->shape.back() && bias->shape[0] == x->shape.back(),
        "layer_norm: shape mismatch ", shape_str(x->shape), " vs gain ", shape_str(gain->shape),
        ", bias ", shape_str(bias->shape));
  const int64_t d = x->shape.back();
  const int64_t rows = x->size() / d;
  auto out = tape.fresh(x->shape);
  // x_hat is needed by backward; stored densely alongside the inverse stddev.
  auto xhat = std::make_shared<std::vector<T>>(x->value.size());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const T* xv = x->value.data() + r * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += xv[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = xv[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*inv_std)[static_cast<size_t>(r)] = inv;
    for (int64_t j = 0; j < d; ++j) {
      const T xh = (xv[j] - static_cast<T>(mean)) * inv;
      (*xhat)[static_cast<size_t>(r * d + j)] = xh;
      out->value[r * d + j] = gain->value[j] * xh + bias->value[j];
    }
  }
  if (tape.recording(x, gain, bias)) {
    tape.attach(out, [x, gain, bias, xhat, inv_std, rows, d](Node<T>& o) {
      for (int64_t r = 0; r < rows; ++r) {
        const T* go = o.grad.data() + r * d;
        const T* xh = xhat->data() + r * d;
        if (gain->requires_grad) {
          auto& gg = ensure_grad(*gain);
          for (int64_t j = 0; j < d; ++j) gg[j] += go[j] * xh[j];
        }
        if (bias->requires_grad) {
          auto& gb = ensure_grad(*bias);
          for (int64_t j = 0; j < d; ++j) gb[j] += go[j];
        }
        if (x->requires_grad) {
          auto& gx = ensure_grad(*x);
          T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
          for (int64_t j = 0; j < d; ++j) {
            const T dxh = go[j] * gain->value[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
          }
          mean_dxhat /= static_cast<T>(d);
          mean_dxhat_xhat /= static_cast<T>(d);
          const T inv = (*inv_std)[static_cast<size_t>(r)];
          for (int64_t j = 0; j < d; ++j) {
            const T dxh = go[j] * gain->value[j];
            gx[r * d + j] += inv * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

// ---- head bookkeeping ----

// [B, L, D] -> [B*H, L, D/H]; a fixed permutation, so backward is the
// inverse scatter.
template <class T>
NodePtr<T> split_heads(Tape<T>& tape, const NodePtr<T>& x, int n_heads) {
  check(x->shape.size() == 3 && x->shape[2] % n_heads == 0, "split_heads: shape ",
        shape_str(x->shape), " not divisible into ", n_heads, " heads");
  const int B = x->shape[0], L = x->shape[1], D = x->shape[2];
  const int dk = D / n_heads;
  auto out = tape.fresh({B * n_heads, L, dk});
  for (int b = 0; b < B; ++b)
    for (int l = 0; l < L; ++l)
      for (int h = 0; h < n_heads; ++h)
        std::copy_n(x->value.data() + (int64_t(b) * L + l) * D + int64_t(h) * dk, dk,
                    out->value.data() + ((int64_t(b) * n_heads + h) * L + l) * dk);
  if (tape.recording(x)) {
    tape.attach(out, [x, B, L, D, n_heads, dk](Node<T>& o) {
      auto& g = ensure_grad(*x);
      for (int b = 0; b < B; ++b)
        for (int l = 0; l < L; ++l)
          for (int h = 0; h < n_heads; ++h) {
            T* dst = g.data() + (int64_t(b) * L + l) * D + int64_t(h) * dk;
            const T* src = o.grad.data() + ((int64_t(b) * n_heads + h) * L + l) * dk;
            for (int j = 0; j < dk; ++j) dst[j] += src[j];
          }
    });
  }
  return out;
}

// [B*H, L, dk] -> [B, L, H*dk]; inverse of split_heads.
template <class T>
NodePtr<T> merge_heads(Tape<T>& tape, const NodePtr<T>& x, int n_heads) {
  check(x->shape.size() == 3 && x->shape[0] % n_heads == 0, "merge_heads: shape ",
        shape_str(x->shape), " not a multiple of ", n_heads, " heads");
  const int B = x->shape[0] / n_heads, L = x->shape[1], dk = x->shape[2];
  const int D = dk * n_heads;
  auto out = tape.fresh({B, L, D});
  for (int b = 0; b < B; ++b)
    for (int l = 0; l < L; ++l)
      for (int h = 0; h < n_heads; ++h)
        std::copy_n(x->value.data() + ((int64_t(b) * n_heads + h) * L + l) * dk, dk,
                    out->value.data() + (int64_t(b) * L + l) * D + int64_t(h) * dk);
  if (tape.recording(x)) {
    tape.attach(out, [x, B, L, D, n_heads, dk](Node<T>& o) {
      auto& g = ensure_grad(*x);
      for (int b = 0; b < B; ++b)
        for (int l = 0; l < L; ++l)
          for (int h = 0; h < n_heads; ++h) {
            T* dst = g.data() + ((int64_t(b) * n_heads + h) * L + l) * dk;
            const T* src = o.grad.data() + (int64_t(b) * L + l) * D + int64_t(h) * dk;
            for (int j = 0; j < dk; ++j) dst[j] += src[j];
          }
    });
  }
  return out;
}

// ---- parameter binding ----

// Tape-bound view of a parameter store: one leaf per tensor. Binding the
// online store with gradients on and running both masked views against the
// same leaves is what makes shared parameters accumulate both contributions.
template <class T>
struct BoundParams {
  std::unordered_map<std::string, NodePtr<T>> nodes;

  const NodePtr<T>& at(const std::string& name) const {
    auto it = nodes.find(name);
    check(it != nodes.end(), "unbound parameter '", name, "'");
    return it->second;
  }
};

template <class T>
BoundParams<T> bind_params(Tape<T>& tape, const TensorMap<T>& store, bool requires_grad) {
  BoundParams<T> bound;
  for (const auto& [name, data] : store) bound.nodes.emplace(name, tape.leaf(data, requires_grad));
  return bound;
}

}  // namespace natlab

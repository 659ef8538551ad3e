#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tmr/common.hpp"
#include "tmr/rng.hpp"

// Reverse-mode autodiff over small dense matrices. Backward functions build
// tape nodes themselves, so a gradient is again a differentiable expression;
// the relation critic's gradient penalty differentiates through one.

namespace tmr::ad {

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), data(size_t(r) * size_t(c), fill) {}

  static Tensor column(std::vector<double> v) {
    Tensor t;
    t.rows = int(v.size());
    t.cols = 1;
    t.data = std::move(v);
    return t;
  }
  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor uniform(int r, int c, Rng& rng, double lo, double hi) {
    Tensor t(r, c);
    for (auto& x : t.data) x = rng.uniform(lo, hi);
    return t;
  }

  double& at(int r, int c) { return data[size_t(r) * cols + c]; }
  double at(int r, int c) const { return data[size_t(r) * cols + c]; }
  int size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  bool finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }
  double item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor");
    return data[0];
  }
};

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  std::vector<Var> parents;
  // Given the gradient flowing into this node, produce one gradient Var per
  // parent (empty Var = no contribution). Null for leaves and constants.
  std::function<std::vector<Var>(const Var&)> grad_fn;
  bool requires_grad = false;
  const char* op = "";
};

inline Var constant(Tensor t, const char* op = "const") {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->op = op;
  return n;
}

inline Var leaf(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  n->op = "leaf";
  return n;
}

inline Var make_op(Tensor value, std::vector<Var> parents,
                   std::function<std::vector<Var>(const Var&)> grad_fn, const char* op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  n->parents = std::move(parents);
  if (n->requires_grad) n->grad_fn = std::move(grad_fn);
  return n;
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a->value.rows) + "x" +
                     std::to_string(a->value.cols) + " vs " + std::to_string(b->value.rows) + "x" +
                     std::to_string(b->value.cols));
}

// ---- primitives -----------------------------------------------------------

inline Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  for (int i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
  return make_op(std::move(out), {a, b}, [](const Var& g) { return std::vector<Var>{g, g}; },
                 "add");
}

inline Var smul(Var a, double c);

inline Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (int i = 0; i < out.size(); ++i) out.data[i] -= b->value.data[i];
  return make_op(std::move(out), {a, b},
                 [](const Var& g) { return std::vector<Var>{g, smul(g, -1.0)}; }, "sub");
}

inline Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (int i = 0; i < out.size(); ++i) out.data[i] *= b->value.data[i];
  auto pa = a, pb = b;
  return make_op(std::move(out), {a, b},
                 [pa, pb](const Var& g) { return std::vector<Var>{mul(g, pb), mul(g, pa)}; },
                 "mul");
}

inline Var smul(Var a, double c) {
  Tensor out = a->value;
  for (auto& x : out.data) x *= c;
  return make_op(std::move(out), {a},
                 [c](const Var& g) { return std::vector<Var>{smul(g, c)}; }, "smul");
}

inline Var add_const(Var a, double c) {
  Tensor out = a->value;
  for (auto& x : out.data) x += c;
  return make_op(std::move(out), {a}, [](const Var& g) { return std::vector<Var>{g}; },
                 "add_const");
}

inline Var neg(Var a) { return smul(std::move(a), -1.0); }

inline Var transpose(Var a) {
  Tensor out(a->value.cols, a->value.rows);
  for (int r = 0; r < a->value.rows; ++r)
    for (int c = 0; c < a->value.cols; ++c) out.at(c, r) = a->value.at(r, c);
  return make_op(std::move(out), {a},
                 [](const Var& g) { return std::vector<Var>{transpose(g)}; }, "transpose");
}

inline Var matmul(Var a, Var b) {
  if (a->value.cols != b->value.rows)
    throw ShapeError("matmul: inner dims " + std::to_string(a->value.cols) + " vs " +
                     std::to_string(b->value.rows));
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  Tensor out(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int k = 0; k < A.cols; ++k) {
      double aik = A.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < B.cols; ++j) out.at(i, j) += aik * B.at(k, j);
    }
  auto pa = a, pb = b;
  return make_op(std::move(out), {a, b},
                 [pa, pb](const Var& g) {
                   return std::vector<Var>{matmul(g, transpose(pb)), matmul(transpose(pa), g)};
                 },
                 "matmul");
}

inline Var slice_rows(Var a, int r0, int r1);

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty");
  int cols = parts[0]->value.cols, rows = 0;
  for (const auto& p : parts) {
    if (p->value.cols != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p->value.rows;
  }
  Tensor out(rows, cols);
  int r = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + size_t(r) * cols);
    r += p->value.rows;
  }
  std::vector<int> offsets;
  offsets.reserve(parts.size() + 1);
  int acc = 0;
  for (const auto& p : parts) {
    offsets.push_back(acc);
    acc += p->value.rows;
  }
  offsets.push_back(acc);
  return make_op(std::move(out), parts,
                 [offsets](const Var& g) {
                   std::vector<Var> out;
                   for (size_t i = 0; i + 1 < offsets.size(); ++i)
                     out.push_back(slice_rows(g, offsets[i], offsets[i + 1]));
                   return out;
                 },
                 "concat_rows");
}

inline Var embed_rows(Var a, int r0, int total_rows);

inline Var slice_rows(Var a, int r0, int r1) {
  if (r0 < 0 || r1 > a->value.rows || r0 >= r1) throw ShapeError("slice_rows: bad range");
  Tensor out(r1 - r0, a->value.cols);
  std::copy(a->value.data.begin() + size_t(r0) * a->value.cols,
            a->value.data.begin() + size_t(r1) * a->value.cols, out.data.begin());
  int total = a->value.rows;
  return make_op(std::move(out), {a},
                 [r0, total](const Var& g) {
                   return std::vector<Var>{embed_rows(g, r0, total)};
                 },
                 "slice_rows");
}

// Place `a` at row offset r0 inside an otherwise-zero (total_rows x cols) tensor.
inline Var embed_rows(Var a, int r0, int total_rows) {
  Tensor out(total_rows, a->value.cols);
  std::copy(a->value.data.begin(), a->value.data.end(),
            out.data.begin() + size_t(r0) * a->value.cols);
  int r1 = r0 + a->value.rows;
  return make_op(std::move(out), {a},
                 [r0, r1](const Var& g) { return std::vector<Var>{slice_rows(g, r0, r1)}; },
                 "embed_rows");
}

inline Var reshape(Var a, int r, int c) {
  if (r * c != a->value.size()) throw ShapeError("reshape: size mismatch");
  Tensor out = a->value;
  out.rows = r;
  out.cols = c;
  int pr = a->value.rows, pc = a->value.cols;
  return make_op(std::move(out), {a},
                 [pr, pc](const Var& g) { return std::vector<Var>{reshape(g, pr, pc)}; },
                 "reshape");
}

inline Var bcast_full(Var s, int r, int c);

inline Var sum_all(Var a) {
  double acc = 0;
  for (double x : a->value.data) acc += x;
  int r = a->value.rows, c = a->value.cols;
  return make_op(Tensor::scalar(acc), {a},
                 [r, c](const Var& g) { return std::vector<Var>{bcast_full(g, r, c)}; },
                 "sum_all");
}

inline Var bcast_full(Var s, int r, int c) {
  if (s->value.size() != 1) throw ShapeError("bcast_full: source not scalar");
  Tensor out(r, c, s->value.data[0]);
  return make_op(std::move(out), {s}, [](const Var& g) { return std::vector<Var>{sum_all(g)}; },
                 "bcast_full");
}

inline Var bcast_cols(Var v, int n);

inline Var rowsum(Var a) {
  Tensor out(a->value.rows, 1);
  for (int r = 0; r < a->value.rows; ++r) {
    double acc = 0;
    for (int c = 0; c < a->value.cols; ++c) acc += a->value.at(r, c);
    out.at(r, 0) = acc;
  }
  int n = a->value.cols;
  return make_op(std::move(out), {a},
                 [n](const Var& g) { return std::vector<Var>{bcast_cols(g, n)}; }, "rowsum");
}

// (m,1) -> (m,n), copying the column.
inline Var bcast_cols(Var v, int n) {
  if (v->value.cols != 1) throw ShapeError("bcast_cols: source not a column");
  Tensor out(v->value.rows, n);
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < n; ++c) out.at(r, c) = v->value.at(r, 0);
  return make_op(std::move(out), {v}, [](const Var& g) { return std::vector<Var>{rowsum(g)}; },
                 "bcast_cols");
}

inline Var bcast_rows(Var v, int m);

inline Var colsum(Var a) {
  Tensor out(1, a->value.cols);
  for (int r = 0; r < a->value.rows; ++r)
    for (int c = 0; c < a->value.cols; ++c) out.at(0, c) += a->value.at(r, c);
  int m = a->value.rows;
  return make_op(std::move(out), {a},
                 [m](const Var& g) { return std::vector<Var>{bcast_rows(g, m)}; }, "colsum");
}

// (1,n) -> (m,n), copying the row.
inline Var bcast_rows(Var v, int m) {
  if (v->value.rows != 1) throw ShapeError("bcast_rows: source not a row");
  Tensor out(m, v->value.cols);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < out.cols; ++c) out.at(r, c) = v->value.at(0, c);
  return make_op(std::move(out), {v}, [](const Var& g) { return std::vector<Var>{colsum(g)}; },
                 "bcast_rows");
}

// Scale row i of A by v[i].
inline Var mul_colvec(Var a, Var v) {
  if (v->value.cols != 1 || v->value.rows != a->value.rows)
    throw ShapeError("mul_colvec: v must be (rows,1)");
  Tensor out = a->value;
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) out.at(r, c) *= v->value.at(r, 0);
  auto pa = a, pv = v;
  return make_op(std::move(out), {a, v},
                 [pa, pv](const Var& g) {
                   return std::vector<Var>{mul_colvec(g, pv), rowsum(mul(g, pa))};
                 },
                 "mul_colvec");
}

inline Var gather_rows(Var a, std::vector<int> idx);

inline Var scatter_rows(Var a, std::vector<int> idx, int total_rows) {
  if (int(idx.size()) != a->value.rows) throw ShapeError("scatter_rows: index count");
  Tensor out(total_rows, a->value.cols);
  for (int r = 0; r < a->value.rows; ++r)
    for (int c = 0; c < a->value.cols; ++c) out.at(idx[r], c) += a->value.at(r, c);
  return make_op(std::move(out), {a},
                 [idx](const Var& g) { return std::vector<Var>{gather_rows(g, idx)}; },
                 "scatter_rows");
}

inline Var gather_rows(Var a, std::vector<int> idx) {
  Tensor out(int(idx.size()), a->value.cols);
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= a->value.rows) throw ShapeError("gather_rows: index out of range");
    for (int c = 0; c < a->value.cols; ++c) out.at(int(r), c) = a->value.at(idx[r], c);
  }
  int total = a->value.rows;
  return make_op(std::move(out), {a},
                 [idx, total](const Var& g) {
                   return std::vector<Var>{scatter_rows(g, idx, total)};
                 },
                 "gather_rows");
}

inline Var vexp(Var a) {
  Tensor out = a->value;
  for (auto& x : out.data) x = std::exp(x);
  auto pa = a;
  return make_op(std::move(out), {a},
                 [pa](const Var& g) { return std::vector<Var>{mul(g, vexp(pa))}; }, "exp");
}

inline Var reciprocal(Var a) {
  Tensor out = a->value;
  for (auto& x : out.data) x = 1.0 / x;
  auto pa = a;
  return make_op(std::move(out), {a},
                 [pa](const Var& g) {
                   Var r = reciprocal(pa);
                   return std::vector<Var>{neg(mul(g, mul(r, r)))};
                 },
                 "reciprocal");
}

inline Var vlog(Var a) {
  Tensor out = a->value;
  for (auto& x : out.data) x = std::log(x);
  auto pa = a;
  return make_op(std::move(out), {a},
                 [pa](const Var& g) { return std::vector<Var>{mul(g, reciprocal(pa))}; }, "log");
}

inline Var vsqrt(Var a) {
  Tensor out = a->value;
  for (auto& x : out.data) x = std::sqrt(x);
  auto pa = a;
  return make_op(std::move(out), {a},
                 [pa](const Var& g) {
                   return std::vector<Var>{mul(g, smul(reciprocal(vsqrt(pa)), 0.5))};
                 },
                 "sqrt");
}

// Subgradient at 0 is taken as 0; the mask is a constant of the tape.
inline Var relu(Var a) {
  Tensor out = a->value;
  Tensor mask(out.rows, out.cols);
  for (int i = 0; i < out.size(); ++i) {
    mask.data[i] = out.data[i] > 0 ? 1.0 : 0.0;
    out.data[i] = out.data[i] > 0 ? out.data[i] : 0.0;
  }
  auto mv = constant(std::move(mask), "relu_mask");
  return make_op(std::move(out), {a},
                 [mv](const Var& g) { return std::vector<Var>{mul(g, mv)}; }, "relu");
}

inline Var vtanh(Var a) {
  Tensor out = a->value;
  for (auto& x : out.data) x = std::tanh(x);
  auto pa = a;
  return make_op(std::move(out), {a},
                 [pa](const Var& g) {
                   Var t = vtanh(pa);
                   Var one = constant(Tensor(t->value.rows, t->value.cols, 1.0));
                   return std::vector<Var>{mul(g, sub(one, mul(t, t)))};
                 },
                 "tanh");
}

// ---- composites ------------------------------------------------------------

inline Var sigmoid(Var a) { return reciprocal(add_const(vexp(neg(a)), 1.0)); }

inline Var dot(Var a, Var b) { return sum_all(mul(std::move(a), std::move(b))); }

inline Var square(Var a) { return mul(a, a); }

inline Var norm2(Var a) { return vsqrt(sum_all(square(std::move(a)))); }

// Row-wise softmax with a detached max shift for stability.
inline Var softmax_rows(Var a) {
  Tensor mx(a->value.rows, 1);
  for (int r = 0; r < a->value.rows; ++r) {
    double m = a->value.at(r, 0);
    for (int c = 1; c < a->value.cols; ++c) m = std::max(m, a->value.at(r, c));
    mx.at(r, 0) = m;
  }
  Var shifted = sub(a, bcast_cols(constant(std::move(mx), "rowmax"), a->value.cols));
  Var e = vexp(shifted);
  return mul_colvec(e, reciprocal(rowsum(e)));
}

// Softmax of a column vector (n,1).
inline Var softmax_col(Var a) {
  if (a->value.cols != 1) throw ShapeError("softmax_col: not a column");
  double m = a->value.data[0];
  for (double x : a->value.data) m = std::max(m, x);
  Var e = vexp(add_const(a, -m));
  Var s = sum_all(e);
  return mul(e, bcast_full(reciprocal(s), e->value.rows, 1));
}

// ---- backward --------------------------------------------------------------

struct Grads {
  std::unordered_map<const Node*, Var> map;

  bool has(const Var& v) const { return map.count(v.get()) > 0; }
  Var at(const Var& v) const {
    auto it = map.find(v.get());
    if (it == map.end()) throw LookupError("Grads: no gradient recorded for node");
    return it->second;
  }
  Tensor value_or_zero(const Var& v) const {
    auto it = map.find(v.get());
    if (it == map.end()) return Tensor(v->value.rows, v->value.cols);
    return it->second->value;
  }
};

inline Grads backward(const Var& root) {
  Grads grads;
  if (!root->requires_grad) return grads;

  // Children-before-parents order via iterative post-order DFS.
  std::vector<const Node*> order;
  std::unordered_map<const Node*, int> state;  // 0 unseen, 1 open, 2 done
  std::vector<Var> stack{root};
  while (!stack.empty()) {
    Var n = stack.back();
    int& st = state[n.get()];
    if (st == 0) {
      st = 1;
      for (const auto& p : n->parents)
        if (p->requires_grad && state[p.get()] == 0) stack.push_back(p);
    } else {
      if (st == 1) {
        st = 2;
        order.push_back(n.get());
      }
      stack.pop_back();
    }
  }

  // Keep Node* -> Var resolution for the traversal.
  std::unordered_map<const Node*, Var> vars;
  vars.reserve(order.size());
  {
    std::vector<Var> st2{root};
    std::unordered_map<const Node*, bool> seen;
    while (!st2.empty()) {
      Var n = st2.back();
      st2.pop_back();
      if (seen[n.get()]) continue;
      seen[n.get()] = true;
      vars[n.get()] = n;
      for (const auto& p : n->parents)
        if (p->requires_grad && !seen[p.get()]) st2.push_back(p);
    }
  }

  grads.map[root.get()] = constant(Tensor(root->value.rows, root->value.cols, 1.0), "seed");
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* n = *it;
    auto git = grads.map.find(n);
    if (git == grads.map.end()) continue;
    const Var& node_var = vars[n];
    if (!node_var->grad_fn) continue;
    std::vector<Var> contribs = node_var->grad_fn(git->second);
    for (size_t i = 0; i < contribs.size(); ++i) {
      const Var& parent = node_var->parents[i];
      if (!parent->requires_grad || !contribs[i]) continue;
      auto pit = grads.map.find(parent.get());
      if (pit == grads.map.end())
        grads.map[parent.get()] = contribs[i];
      else
        pit->second = add(pit->second, contribs[i]);
    }
  }
  return grads;
}

// Wraps parameter tensors as tape leaves, one leaf per distinct tensor
// address within a forward pass.
struct Lift {
  std::unordered_map<const Tensor*, Var> cache;

  Var operator()(const Tensor& t) {
    auto it = cache.find(&t);
    if (it != cache.end()) return it->second;
    Var v = leaf(t);
    cache.emplace(&t, v);
    return v;
  }
};

}  // namespace tmr::ad

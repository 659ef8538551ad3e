#pragma once

#include <cmath>
#include <vector>

#include "tmr/tensor.hpp"

namespace tmr::nn {

using ad::Tensor;
using ad::Var;

// All learned tensors are drawn uniform in [-1/sqrt(d), 1/sqrt(d)] with d
// the model embedding dimension.
inline Tensor init_param(int rows, int cols, int d, Rng& rng) {
  double b = 1.0 / std::sqrt(double(std::max(1, d)));
  return Tensor::uniform(rows, cols, rng, -b, b);
}

// y = W x + b for column vectors; b optional.
inline Var affine(const Var& w, const Var& x, const Var& b = nullptr) {
  Var y = ad::matmul(w, x);
  if (b) y = ad::add(y, b);
  return y;
}

struct LstmParams {
  // Gate order along rows: input, forget, output, cell candidate.
  Tensor w_x;  // (4h, in)
  Tensor w_h;  // (4h, h)
  Tensor bias; // (4h, 1)
  int hidden = 0;

  LstmParams() = default;
  LstmParams(int in_dim, int hidden_dim, int d, Rng& rng)
      : w_x(init_param(4 * hidden_dim, in_dim, d, rng)),
        w_h(init_param(4 * hidden_dim, hidden_dim, d, rng)),
        bias(init_param(4 * hidden_dim, 1, d, rng)),
        hidden(hidden_dim) {}

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "/w_x", w_x);
    f(prefix + "/w_h", w_h);
    f(prefix + "/bias", bias);
  }
};

struct LstmState {
  Var h;
  Var c;
};

inline LstmState lstm_init(int hidden) {
  return {ad::constant(Tensor(hidden, 1)), ad::constant(Tensor(hidden, 1))};
}

inline LstmState lstm_step(const LstmParams& p, ad::Lift& lift, const LstmState& s, const Var& x) {
  int h = p.hidden;
  Var z = ad::add(ad::add(ad::matmul(lift(p.w_x), x), ad::matmul(lift(p.w_h), s.h)), lift(p.bias));
  Var i = ad::sigmoid(ad::slice_rows(z, 0, h));
  Var f = ad::sigmoid(ad::slice_rows(z, h, 2 * h));
  Var o = ad::sigmoid(ad::slice_rows(z, 2 * h, 3 * h));
  Var g = ad::vtanh(ad::slice_rows(z, 3 * h, 4 * h));
  Var c = ad::add(ad::mul(f, s.c), ad::mul(i, g));
  return {ad::mul(o, ad::vtanh(c)), c};
}

// Runs the cell over a token sequence and returns the final hidden state.
inline Var lstm_encode(const LstmParams& p, ad::Lift& lift, const std::vector<Var>& tokens) {
  LstmState s = lstm_init(p.hidden);
  for (const auto& t : tokens) s = lstm_step(p, lift, s, t);
  return s.h;
}

// 1-D convolution over a column vector via window gathering: each window of
// `width` values (advancing by `stride`) maps to `channels` outputs.
// Result is the flattened (windows x channels) response as a column.
inline Var conv1d(const Var& x, const Var& kernel /*(width, channels)*/,
                  const Var& bias /*(1, channels)*/, int stride) {
  int len = x->value.rows;
  int width = kernel->value.rows;
  if (x->value.cols != 1) throw ShapeError("conv1d: input must be a column");
  if (width > len) throw ShapeError("conv1d: kernel wider than input");
  int windows = (len - width) / stride + 1;
  std::vector<int> idx;
  idx.reserve(size_t(windows) * width);
  for (int t = 0; t < windows; ++t)
    for (int k = 0; k < width; ++k) idx.push_back(t * stride + k);
  Var win = ad::reshape(ad::gather_rows(x, idx), windows, width);
  Var out = ad::add(ad::matmul(win, kernel), ad::bcast_rows(bias, windows));
  return ad::reshape(out, windows * kernel->value.cols, 1);
}

// SGD with global-norm clipping across every parameter passed in one step.
struct Sgd {
  double lr = 0.01;
  double clip_norm = 5.0;

  // Returns the pre-clip gradient norm. Throws on non-finite gradients.
  double step(const std::vector<Tensor*>& params, ad::Lift& lift, const ad::Grads& grads) {
    double sq = 0.0;
    std::vector<Tensor> gs;
    gs.reserve(params.size());
    for (Tensor* p : params) {
      auto it = lift.cache.find(p);
      if (it == lift.cache.end()) {
        gs.emplace_back(p->rows, p->cols);
        continue;
      }
      Tensor g = grads.value_or_zero(it->second);
      if (!g.finite()) throw std::runtime_error("sgd: non-finite gradient");
      for (double v : g.data) sq += v * v;
      gs.push_back(std::move(g));
    }
    double norm = std::sqrt(sq);
    double scale = (clip_norm > 0 && norm > clip_norm) ? clip_norm / norm : 1.0;
    for (size_t i = 0; i < params.size(); ++i)
      for (int j = 0; j < params[i]->size(); ++j)
        params[i]->data[j] -= lr * scale * gs[i].data[j];
    return norm;
  }
};

}  // namespace tmr::nn

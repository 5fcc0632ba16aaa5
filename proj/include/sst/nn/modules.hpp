#pragma once

#include "sst/nn/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sst::nn {

// Named parameter registry. Modules register their leaf Vars here so the
// optimizer and checkpoint code can enumerate them in a stable order.
template <class T>
struct ParamStore {
  std::vector<std::pair<std::string, Var<T>>> params;

  Var<T> add(const std::string& name, Mat<T> init) {
    auto v = make_var<T>(std::move(init), true);
    params.emplace_back(name, v);
    return v;
  }
  Var<T> find(const std::string& name) const {
    for (auto& [n, v] : params)
      if (n == name) return v;
    throw std::runtime_error("parameter not found: " + name);
  }
  void zero_grad() {
    for (auto& [n, v] : params) v->grad.setZero();
  }
  size_t count() const {
    size_t c = 0;
    for (auto& [n, v] : params) c += v->val.size();
    return c;
  }
};

// Truncated-normal init, std 0.02, resampling outside 2 std.
template <class T>
Mat<T> trunc_normal(int rows, int cols, std::mt19937_64& rng, T std_dev = T(0.02)) {
  std::normal_distribution<double> dist(0.0, (double)std_dev);
  Mat<T> m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double x;
      do {
        x = dist(rng);
      } while (std::abs(x) > 2.0 * (double)std_dev);
      m(i, j) = T(x);
    }
  return m;
}

template <class T>
struct Linear {
  Var<T> W, b;

  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& name, int in, int out,
         std::mt19937_64& rng) {
    W = ps.add(name + ".W", trunc_normal<T>(in, out, rng));
    b = ps.add(name + ".b", Mat<T>::Zero(1, out));
  }
  Var<T> operator()(const Var<T>& x) const { return add_rowvec(matmul(x, W), b); }
};

template <class T>
struct LayerNorm {
  Var<T> gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& ps, const std::string& name, int d) {
    gamma = ps.add(name + ".gamma", Mat<T>::Ones(1, d));
    beta = ps.add(name + ".beta", Mat<T>::Zero(1, d));
  }
  Var<T> operator()(const Var<T>& x) const { return layernorm_rows(x, gamma, beta); }
};

// Multi-head attention; query stream x attends to memory mem (mem == x for
// self-attention).
template <class T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  int heads = 1, dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& ps, const std::string& name, int d, int h,
                     std::mt19937_64& rng)
      : wq(ps, name + ".q", d, d, rng),
        wk(ps, name + ".k", d, d, rng),
        wv(ps, name + ".v", d, d, rng),
        wo(ps, name + ".o", d, d, rng),
        heads(h),
        dim(d) {
    if (d % h != 0) throw std::invalid_argument("attention width not divisible by heads");
  }

  Var<T> operator()(const Var<T>& x, const Var<T>& mem) const {
    const int dh = dim / heads;
    const T sc = T(1) / std::sqrt(T(dh));
    Var<T> q = wq(x), k = wk(mem), v = wv(mem);
    std::vector<Var<T>> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      Var<T> qh = slice_cols(q, h * dh, dh);
      Var<T> kh = slice_cols(k, h * dh, dh);
      Var<T> vh = slice_cols(v, h * dh, dh);
      Var<T> attn = softmax_rows(scale(matmul(qh, transpose(kh)), sc));
      outs.push_back(matmul(attn, vh));
    }
    return wo(concat_cols(outs));
  }
};

template <class T>
struct Mlp {
  Linear<T> fc1, fc2;

  Mlp() = default;
  Mlp(ParamStore<T>& ps, const std::string& name, int d, int hidden,
      std::mt19937_64& rng)
      : fc1(ps, name + ".fc1", d, hidden, rng), fc2(ps, name + ".fc2", hidden, d, rng) {}

  Var<T> operator()(const Var<T>& x) const { return fc2(gelu(fc1(x))); }
};

// Pre-LN encoder block: self-attention + MLP with residuals.
template <class T>
struct EncoderBlock {
  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  Mlp<T> mlp;

  EncoderBlock() = default;
  EncoderBlock(ParamStore<T>& ps, const std::string& name, int d, int heads,
               int mlp_hidden, std::mt19937_64& rng)
      : ln1(ps, name + ".ln1", d),
        ln2(ps, name + ".ln2", d),
        attn(ps, name + ".attn", d, heads, rng),
        mlp(ps, name + ".mlp", d, mlp_hidden, rng) {}

  Var<T> operator()(const Var<T>& x) const {
    Var<T> h = ln1(x);
    Var<T> y = add(x, attn(h, h));
    return add(y, mlp(ln2(y)));
  }
};

// Pre-LN decoder block: self-attention, cross-attention to mem, MLP.
template <class T>
struct DecoderBlock {
  LayerNorm<T> ln1, ln2, ln3;
  MultiHeadAttention<T> self_attn, cross_attn;
  Mlp<T> mlp;

  DecoderBlock() = default;
  DecoderBlock(ParamStore<T>& ps, const std::string& name, int d, int heads,
               int mlp_hidden, std::mt19937_64& rng)
      : ln1(ps, name + ".ln1", d),
        ln2(ps, name + ".ln2", d),
        ln3(ps, name + ".ln3", d),
        self_attn(ps, name + ".self", d, heads, rng),
        cross_attn(ps, name + ".cross", d, heads, rng),
        mlp(ps, name + ".mlp", d, mlp_hidden, rng) {}

  Var<T> operator()(const Var<T>& x, const Var<T>& mem) const {
    Var<T> h = ln1(x);
    Var<T> y = add(x, self_attn(h, h));
    y = add(y, cross_attn(ln2(y), mem));
    return add(y, mlp(ln3(y)));
  }
};

// Adam with cosine-decayed learning rate.
template <class T>
struct Adam {
  T lr = T(3e-4), beta1 = T(0.9), beta2 = T(0.999), eps = T(1e-8);
  int64_t step_count = 0;
  int64_t total_steps = 0;  // 0 = constant lr
  T warmup_frac = T(0.03);
  std::vector<Mat<T>> m, v;

  void init(const ParamStore<T>& ps) {
    m.clear();
    v.clear();
    for (auto& [n, p] : ps.params) {
      m.push_back(Mat<T>::Zero(p->val.rows(), p->val.cols()));
      v.push_back(Mat<T>::Zero(p->val.rows(), p->val.cols()));
    }
  }

  T current_lr() const {
    if (total_steps <= 0) return lr;
    T t = T(step_count) / T(total_steps);
    T w = warmup_frac;
    if (w > T(0) && t < w) return lr * t / w;
    T u = (t - w) / (T(1) - w);
    return lr * T(0.5) * (T(1) + std::cos(T(M_PI) * std::min(u, T(1))));
  }

  void step(ParamStore<T>& ps) {
    ++step_count;
    T a = current_lr();
    T bc1 = T(1) - std::pow(beta1, T(step_count));
    T bc2 = T(1) - std::pow(beta2, T(step_count));
    for (size_t i = 0; i < ps.params.size(); ++i) {
      auto& p = ps.params[i].second;
      if (p->grad.size() == 0) continue;
      m[i] = beta1 * m[i] + (T(1) - beta1) * p->grad;
      v[i] = (beta2 * v[i]).array() + (T(1) - beta2) * p->grad.array().square();
      auto mhat = m[i].array() / bc1;
      auto vhat = v[i].array() / bc2;
      p->val.array() -= a * mhat / (vhat.sqrt() + eps);
    }
  }
};

}  // namespace sst::nn

#pragma once

#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include "slu/ops.hpp"
#include "slu/rng.hpp"
#include "slu/tensor.hpp"

namespace slu {

// Ordered name -> tensor registry. Registration order is fixed by module
// construction, so the same config always yields the same name list.
template <class S>
struct ParamMap {
  std::vector<std::pair<std::string, Tensor<S>>> items;

  void add(const std::string& name, const Tensor<S>& t) {
    if (!seen_.insert(name).second) throw ContractError("duplicate parameter name: " + name);
    items.emplace_back(name, t);
  }

  const Tensor<S>* find(const std::string& name) const {
    for (const auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  size_t size() const { return items.size(); }

 private:
  std::unordered_set<std::string> seen_;
};

namespace init {

template <class S>
Tensor<S> xavier_uniform(Index fan_in, Index fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<S> t = Tensor<S>::zeros({fan_in, fan_out});
  S* p = t.data();
  Index n = t.numel();
  for (Index i = 0; i < n; ++i) p[i] = static_cast<S>(rng.uniform(-limit, limit));
  t.set_requires_grad(true);
  return t;
}

template <class S>
Tensor<S> normal(Index rows, Index cols, double stddev, Rng& rng) {
  Tensor<S> t = Tensor<S>::zeros({rows, cols});
  S* p = t.data();
  Index n = t.numel();
  for (Index i = 0; i < n; ++i) p[i] = static_cast<S>(rng.normal(0.0, stddev));
  t.set_requires_grad(true);
  return t;
}

// Embedding rows ~ N(0, d^-1/2).
template <class S>
Tensor<S> embedding_table(Index entries, Index d, Rng& rng) {
  return normal<S>(entries, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
}

template <class S>
Tensor<S> zeros_param(Index rows, Index cols) {
  Tensor<S> t = Tensor<S>::zeros({rows, cols});
  t.set_requires_grad(true);
  return t;
}

template <class S>
Tensor<S> ones_param(Index rows, Index cols) {
  Tensor<S> t = Tensor<S>::full({rows, cols}, S(1));
  t.set_requires_grad(true);
  return t;
}

}  // namespace init

// y = x . w + b, weights stored [in x out].
template <class S>
struct Linear {
  Tensor<S> w, b;

  Linear() = default;
  Linear(Index in, Index out, Rng& rng)
      : w(init::xavier_uniform<S>(in, out, rng)), b(init::zeros_param<S>(1, out)) {}

  Tensor<S> operator()(const Tensor<S>& x) const { return ops::add_rowvec(ops::matmul(x, w), b); }

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    m.add(prefix + ".w", w);
    m.add(prefix + ".b", b);
  }
};

template <class S>
struct LayerNorm {
  Tensor<S> gain, bias;
  S eps = S(1e-5);

  LayerNorm() = default;
  explicit LayerNorm(Index d) : gain(init::ones_param<S>(1, d)), bias(init::zeros_param<S>(1, d)) {}

  Tensor<S> operator()(const Tensor<S>& x) const { return ops::layer_norm(x, gain, bias, eps); }

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    m.add(prefix + ".gain", gain);
    m.add(prefix + ".bias", bias);
  }
};

// Two linear maps with a ReLU in between.
template <class S>
struct FeedForward {
  Linear<S> fc1, fc2;

  FeedForward() = default;
  FeedForward(Index d_model, Index d_ff, Rng& rng) : fc1(d_model, d_ff, rng), fc2(d_ff, d_model, rng) {}

  Tensor<S> operator()(const Tensor<S>& x) const { return fc2(ops::relu(fc1(x))); }

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    fc1.register_params(m, prefix + ".fc1");
    fc2.register_params(m, prefix + ".fc2");
  }
};

// Builds a [Tq x Tk] additive bias: 0 on attendable keys, -1e30 elsewhere.
template <class S>
Tensor<S> attention_bias(Index tq, Index tk, const std::vector<uint8_t>* key_mask, bool causal) {
  Tensor<S> bias = Tensor<S>::zeros({tq, tk});
  const S neg = S(-1e30);
  for (Index i = 0; i < tq; ++i)
    for (Index j = 0; j < tk; ++j) {
      bool blocked = (key_mask && !(*key_mask)[static_cast<size_t>(j)]) || (causal && j > i);
      if (blocked) bias(i, j) = neg;
    }
  return bias;
}

// Scaled dot-product attention with separate query/key/value sources and
// full projections; key padding handled by additive -inf bias.
template <class S>
struct MultiHeadAttention {
  Linear<S> wq, wk, wv, wo;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(Index d_model, int n_heads, Rng& rng)
      : wq(d_model, d_model, rng),
        wk(d_model, d_model, rng),
        wv(d_model, d_model, rng),
        wo(d_model, d_model, rng),
        heads(n_heads) {
    if (d_model % n_heads != 0)
      throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by heads " + std::to_string(n_heads));
  }

  // attn_probs, when non-null, receives the per-head weight matrices.
  Tensor<S> operator()(const Tensor<S>& q_src, const Tensor<S>& k_src, const Tensor<S>& v_src,
                       const std::vector<uint8_t>* key_mask = nullptr, bool causal = false,
                       std::vector<Tensor<S>>* attn_probs = nullptr) const {
    if (k_src.rows() != v_src.rows())
      throw AlignmentError("attention: key length " + std::to_string(k_src.rows()) +
                           " != value length " + std::to_string(v_src.rows()));
    if (key_mask && static_cast<Index>(key_mask->size()) != k_src.rows())
      throw AlignmentError("attention: key mask length mismatch");
    Tensor<S> q = wq(q_src), k = wk(k_src), v = wv(v_src);
    Index d = q.cols();
    Index hd = d / heads;
    S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    Tensor<S> bias = attention_bias<S>(q.rows(), k.rows(), key_mask, causal);
    std::vector<Tensor<S>> head_out;
    head_out.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      Tensor<S> qh = ops::slice_cols(q, h * hd, (h + 1) * hd);
      Tensor<S> kh = ops::slice_cols(k, h * hd, (h + 1) * hd);
      Tensor<S> vh = ops::slice_cols(v, h * hd, (h + 1) * hd);
      Tensor<S> scores = ops::add(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt), bias);
      Tensor<S> probs = ops::softmax_rows(scores);
      if (attn_probs) attn_probs->push_back(probs);
      head_out.push_back(ops::matmul(probs, vh));
    }
    return wo(ops::concat_cols(head_out));
  }

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    wq.register_params(m, prefix + ".wq");
    wk.register_params(m, prefix + ".wk");
    wv.register_params(m, prefix + ".wv");
    wo.register_params(m, prefix + ".wo");
  }
};

}  // namespace slu

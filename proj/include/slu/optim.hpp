#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slu/nn.hpp"
#include "slu/tensor.hpp"

namespace slu {

enum class OptimizerKind { adamw, adam };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::adamw ? "adamw" : "adam"; }

// Adam / AdamW with bias correction. AdamW applies decoupled weight decay;
// plain Adam applies none. Moments are keyed by parameter name.
template <class S>
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adamw;
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // adamw only
  double grad_clip = 0.0;      // 0 disables global-norm clipping
  std::map<std::string, std::vector<double>> m, v;
  uint64_t step_count = 0;
};

// One update over every parameter. Every trainable parameter must carry a
// gradient buffer (zero gradients are fine; an absent buffer is a wiring bug).
template <class S>
void optimizer_step(ParamMap<S>& params, OptimizerState<S>& st) {
  for (auto& [name, t] : params.items)
    if (!t.has_grad()) throw TrainingError("missing gradient for parameter '" + name + "'");
  st.step_count += 1;
  double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));

  if (st.grad_clip > 0.0) {
    double sq = 0.0;
    for (auto& [name, t] : params.items) {
      const S* g = t.grad_data();
      for (Index i = 0; i < t.numel(); ++i) sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
    }
    double norm = std::sqrt(sq);
    if (norm > st.grad_clip) {
      S f = static_cast<S>(st.grad_clip / norm);
      for (auto& [name, t] : params.items) {
        S* g = t.grad_data();
        for (Index i = 0; i < t.numel(); ++i) g[i] *= f;
      }
    }
  }

  for (auto& [name, t] : params.items) {
    auto& m = st.m[name];
    auto& v = st.v[name];
    if (m.empty()) m.assign(static_cast<size_t>(t.numel()), 0.0);
    if (v.empty()) v.assign(static_cast<size_t>(t.numel()), 0.0);
    if (static_cast<Index>(m.size()) != t.numel())
      throw TrainingError("optimizer moment shape mismatch for '" + name + "'");
    S* w = t.data();
    const S* g = t.grad_data();
    for (Index i = 0; i < t.numel(); ++i) {
      double gi = static_cast<double>(g[i]);
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * gi;
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * gi * gi;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      double upd = st.learning_rate * mhat / (std::sqrt(vhat) + st.eps);
      if (st.kind == OptimizerKind::adamw)
        upd += st.learning_rate * st.weight_decay * static_cast<double>(w[i]);
      w[i] = static_cast<S>(static_cast<double>(w[i]) - upd);
    }
  }
}

template <class S>
void zero_grads(ParamMap<S>& params) {
  for (auto& [name, t] : params.items) t.zero_grad();
}

// Fills zero gradients for parameters a step did not touch (legal: their
// gradient is exactly zero).
template <class S>
void fill_missing_grads(ParamMap<S>& params) {
  for (auto& [name, t] : params.items)
    if (!t.has_grad()) t.alloc_grad();
}

}  // namespace slu

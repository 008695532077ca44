#pragma once

#include <optional>
#include <vector>

#include "slu/config.hpp"
#include "slu/nn.hpp"

namespace slu {

// Learned relative-position rows, indexed by clip(p-q, l) + l and shared
// across heads.
template <class S>
struct RelPosTables {
  Tensor<S> wk, wv;  // [(2l+1) x head_dim]

  RelPosTables() = default;
  RelPosTables(Index l, Index head_dim, Rng& rng)
      : wk(init::normal<S>(2 * l + 1, head_dim, 1.0 / std::sqrt(static_cast<double>(head_dim)), rng)),
        wv(init::normal<S>(2 * l + 1, head_dim, 1.0 / std::sqrt(static_cast<double>(head_dim)), rng)) {}

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    m.add(prefix + ".wk", wk);
    m.add(prefix + ".wv", wv);
  }
};

// Encoder layer: relative-position self-attention followed by
// H = Norm(Z + FFN(Z)). The residual wraps the FFN only, with Z as the
// residual source; `standard_residual` optionally restores the conventional
// Norm(x + attention) step for comparison runs.
template <class S>
struct EncoderLayer {
  Linear<S> wq, wk, wv, wo;
  RelPosTables<S> rel;
  FeedForward<S> ffn;
  std::optional<LayerNorm<S>> norm_attn;  // present when standard_residual
  LayerNorm<S> norm_out;
  int heads = 1;
  Index clip = 0;
  double dropout = 0.0;
  bool standard_residual = false;

  EncoderLayer(const RunConfig& cfg, Rng& rng)
      : wq(cfg.d_model, cfg.d_model, rng),
        wk(cfg.d_model, cfg.d_model, rng),
        wv(cfg.d_model, cfg.d_model, rng),
        wo(cfg.d_model, cfg.d_model, rng),
        rel(cfg.rel_pos_clip, cfg.d_model / cfg.heads, rng),
        ffn(cfg.d_model, cfg.effective_d_ff(), rng),
        norm_out(cfg.d_model),
        heads(cfg.heads),
        clip(cfg.rel_pos_clip),
        dropout(cfg.dropout),
        standard_residual(cfg.standard_residual) {
    if (standard_residual) norm_attn.emplace(cfg.d_model);
  }

  // Per head: logits get a key-side relative term, values an a^V term.
  Tensor<S> rel_self_attention(const Tensor<S>& x, const std::vector<uint8_t>* key_mask) const {
    Index t = x.rows();
    Tensor<S> q = wq(x), k = wk(x), v = wv(x);
    Index d = q.cols();
    Index hd = d / heads;
    S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    Tensor<S> bias = attention_bias<S>(t, t, key_mask, false);
    std::vector<Tensor<S>> head_out;
    head_out.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Tensor<S> qh = ops::slice_cols(q, h * hd, (h + 1) * hd);
      Tensor<S> kh = ops::slice_cols(k, h * hd, (h + 1) * hd);
      Tensor<S> vh = ops::slice_cols(v, h * hd, (h + 1) * hd);
      Tensor<S> content = ops::matmul_nt(qh, kh);
      Tensor<S> relterm = ops::gather_rel(ops::matmul_nt(qh, rel.wk), t, clip);
      Tensor<S> scores = ops::add(ops::scale(ops::add(content, relterm), inv_sqrt), bias);
      Tensor<S> probs = ops::softmax_rows(scores);
      Tensor<S> zh = ops::add(ops::matmul(probs, vh), ops::matmul(ops::scatter_rel(probs, clip), rel.wv));
      head_out.push_back(zh);
    }
    return wo(ops::concat_cols(head_out));
  }

  Tensor<S> forward(const Tensor<S>& x, const std::vector<uint8_t>* key_mask, bool training, Rng* rng) const {
    auto drop = [&](const Tensor<S>& t) { return ops::dropout(t, dropout, training, rng); };
    Tensor<S> z = drop(rel_self_attention(x, key_mask));
    if (standard_residual) z = (*norm_attn)(ops::add(x, z));
    return norm_out(ops::add(z, drop(ffn(z))));
  }

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    wq.register_params(m, prefix + ".self_attn.wq");
    wk.register_params(m, prefix + ".self_attn.wk");
    wv.register_params(m, prefix + ".self_attn.wv");
    wo.register_params(m, prefix + ".self_attn.wo");
    rel.register_params(m, prefix + ".relpos");
    ffn.register_params(m, prefix + ".ffn");
    if (norm_attn) norm_attn->register_params(m, prefix + ".norm_attn");
    norm_out.register_params(m, prefix + ".norm_out");
  }
};

// Intent head reads the CLS state; the slot head reads concat(h_j, h_cls).
template <class S>
struct Heads {
  Tensor<S> w_intent;  // [d_i x d_model]
  Tensor<S> b_intent;  // [1 x d_i]
  Tensor<S> w_slot;    // [d_s x 2*d_model]
  Tensor<S> b_slot;    // [1 x d_s]

  Heads() = default;
  Heads(Index d_model, int n_intents, int n_slots, Rng& rng)
      : w_intent(init::xavier_uniform<S>(n_intents, d_model, rng)),
        b_intent(init::zeros_param<S>(1, n_intents)),
        w_slot(init::xavier_uniform<S>(n_slots, 2 * d_model, rng)),
        b_slot(init::zeros_param<S>(1, n_slots)) {}

  struct Logits {
    Tensor<S> intent;  // [1 x d_i]
    Tensor<S> slot;    // [n x d_s], padded positions excluded
  };

  Logits classify(const Tensor<S>& h, Index n) const {
    Logits out;
    Tensor<S> cls = ops::row(h, 0);
    out.intent = ops::add_rowvec(ops::matmul_nt(cls, w_intent), b_intent);
    Tensor<S> toks = ops::slice_rows(h, 1, 1 + n);
    Tensor<S> joined = ops::concat_cols<S>({toks, ops::repeat_rows(cls, n)});
    out.slot = ops::add_rowvec(ops::matmul_nt(joined, w_slot), b_slot);
    return out;
  }

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    m.add(prefix + ".intent.w", w_intent);
    m.add(prefix + ".intent.b", b_intent);
    m.add(prefix + ".slot.w", w_slot);
    m.add(prefix + ".slot.b", b_slot);
  }
};

// Mid-stack refinement: classify preliminary distributions from the hidden
// states, embed them softly, and add the embeddings back before the next
// layer. The weighting over slot embeddings runs over real token positions
// only.
template <class S>
struct Lrm {
  Tensor<S> e_intent;  // [d_e x d_i]
  Tensor<S> e_slot;    // [d_e x d_s]
  Tensor<S> v_attn;    // [1 x d_e]
  std::optional<Heads<S>> own_heads;  // present when heads are not shared

  Lrm(const RunConfig& cfg, int n_intents, int n_slots, Rng& rng)
      : e_intent(init::normal<S>(cfg.d_model, n_intents, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)), rng)),
        e_slot(init::normal<S>(cfg.d_model, n_slots, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)), rng)),
        v_attn(init::normal<S>(1, cfg.d_model, 0.02, rng)) {
    if (!cfg.lrm_shared_heads) own_heads.emplace(cfg.d_model, n_intents, n_slots, rng);
  }

  struct Applied {
    Tensor<S> h;             // refined hidden states
    Tensor<S> prelim_intent; // [1 x d_i] distribution
    Tensor<S> prelim_slots;  // [n x d_s] distributions
  };

  Applied apply(const Tensor<S>& h_k, const Heads<S>& shared_heads, Index n) const {
    const Heads<S>& hd = own_heads ? *own_heads : shared_heads;
    auto logits = hd.classify(h_k, n);
    Applied out;
    out.prelim_intent = ops::softmax_rows(logits.intent);
    out.prelim_slots = ops::softmax_rows(logits.slot);

    Tensor<S> e_i = ops::matmul_nt(out.prelim_intent, e_intent);  // [1 x d_e]
    Tensor<S> e_s = ops::matmul_nt(out.prelim_slots, e_slot);     // [n x d_e]
    Tensor<S> weights = ops::softmax_rows(ops::matmul_nt(v_attn, e_s));  // [1 x n]
    Tensor<S> e_s0 = ops::matmul(weights, e_s);                   // [1 x d_e]

    Tensor<S> cls = ops::add(ops::add(ops::row(h_k, 0), e_i), e_s0);
    Tensor<S> toks = ops::add(ops::slice_rows(h_k, 1, 1 + n), e_s);
    std::vector<Tensor<S>> parts{cls, toks};
    if (h_k.rows() > 1 + n) parts.push_back(ops::slice_rows(h_k, 1 + n, h_k.rows()));
    out.h = ops::concat_rows(parts);
    return out;
  }

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    m.add(prefix + ".intent_embed", e_intent);
    m.add(prefix + ".slot_embed", e_slot);
    m.add(prefix + ".v_attn", v_attn);
    if (own_heads) own_heads->register_params(m, prefix + ".heads");
  }
};

}  // namespace slu

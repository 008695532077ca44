#pragma once

#include <vector>

#include "slu/config.hpp"
#include "slu/nn.hpp"

namespace slu {

// One history-attention layer. The current utterance is self-attended, then
// mixed with historical utterance embeddings (keys/values) and historical
// result embeddings (values keyed by their utterances), sequentially or in
// parallel. All sub-layers are constructed regardless of variant/ablation so
// checkpoints stay interchangeable across the rewirings; unused ones simply
// receive zero gradient.
template <class S>
struct ShaLayer {
  MultiHeadAttention<S> self_attn, utt_attn, res_attn;
  LayerNorm<S> norm_self, norm_utt, norm_res, norm_ffn;
  FeedForward<S> ffn;

  ShaLayer(Index d_model, Index d_ff, int heads, Rng& rng)
      : self_attn(d_model, heads, rng),
        utt_attn(d_model, heads, rng),
        res_attn(d_model, heads, rng),
        norm_self(d_model),
        norm_utt(d_model),
        norm_res(d_model),
        norm_ffn(d_model),
        ffn(d_model, d_ff, rng) {}

  Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& e_u, const Tensor<S>& e_r,
                    const std::vector<uint8_t>* hist_mask, const std::vector<uint8_t>* utt_mask,
                    ShaVariant variant, ShaAblation ablation, double dropout, bool training,
                    Rng* rng) const {
    auto drop = [&](const Tensor<S>& t) { return ops::dropout(t, dropout, training, rng); };
    bool has_history = e_u.defined() && e_u.rows() > 0;
    Tensor<S> hc = norm_self(ops::add(x, drop(self_attn(x, x, x, utt_mask))));

    if (variant == ShaVariant::sequential) {
      Tensor<S> hr = hc;
      if (has_history) {
        switch (ablation) {
          case ShaAblation::full: {
            Tensor<S> hu = norm_utt(ops::add(hc, drop(utt_attn(hc, e_u, e_u, hist_mask))));
            hr = norm_res(ops::add(hu, drop(res_attn(hu, e_u, e_r, hist_mask))));
            break;
          }
          case ShaAblation::utterance_only:
            hr = norm_utt(ops::add(hc, drop(utt_attn(hc, e_u, e_u, hist_mask))));
            break;
          case ShaAblation::result_only:
            hr = norm_res(ops::add(hc, drop(res_attn(hc, e_r, e_r, hist_mask))));
            break;
          case ShaAblation::result_attention_only:
            hr = norm_res(ops::add(hc, drop(res_attn(hc, e_u, e_r, hist_mask))));
            break;
          case ShaAblation::off:
            throw ConfigError("sha layer invoked with ablation 'off'");
        }
      }
      return norm_ffn(ops::add(hr, drop(ffn(hr))));
    }

    // parallel: both history attentions read from hc, one merge norm
    Tensor<S> merged;
    if (!has_history) {
      merged = norm_res(hc);
    } else {
      std::vector<Tensor<S>> branches{hc};
      switch (ablation) {
        case ShaAblation::full:
          branches.push_back(drop(utt_attn(hc, e_u, e_u, hist_mask)));
          branches.push_back(drop(res_attn(hc, e_u, e_r, hist_mask)));
          break;
        case ShaAblation::utterance_only:
          branches.push_back(drop(utt_attn(hc, e_u, e_u, hist_mask)));
          break;
        case ShaAblation::result_only:
          branches.push_back(drop(res_attn(hc, e_r, e_r, hist_mask)));
          break;
        case ShaAblation::result_attention_only:
          branches.push_back(drop(res_attn(hc, e_u, e_r, hist_mask)));
          break;
        case ShaAblation::off:
          throw ConfigError("sha layer invoked with ablation 'off'");
      }
      Tensor<S> acc = branches[0];
      for (size_t i = 1; i < branches.size(); ++i) acc = ops::add(acc, branches[i]);
      merged = norm_res(acc);
    }
    return norm_ffn(ops::add(merged, drop(ffn(merged))));
  }

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    self_attn.register_params(m, prefix + ".self_attn");
    utt_attn.register_params(m, prefix + ".utt_attn");
    res_attn.register_params(m, prefix + ".res_attn");
    norm_self.register_params(m, prefix + ".norm_self");
    norm_utt.register_params(m, prefix + ".norm_utt");
    norm_res.register_params(m, prefix + ".norm_res");
    norm_ffn.register_params(m, prefix + ".norm_ffn");
    ffn.register_params(m, prefix + ".ffn");
  }
};

// N stacked history-attention layers plus the dedicated embedding tables for
// historical intent/slot results. Output merges back into the utterance
// embedding: e_hat = H_N + e.
template <class S>
struct Sha {
  std::vector<ShaLayer<S>> layers;
  Tensor<S> intent_embed;  // [d_i x d_e]
  Tensor<S> slot_embed;    // [d_s x d_e]
  ShaVariant variant = ShaVariant::sequential;
  ShaAblation ablation = ShaAblation::full;
  double dropout = 0.0;

  Sha(const RunConfig& cfg, int n_intents, int n_slots, Rng& rng)
      : intent_embed(init::embedding_table<S>(n_intents, cfg.d_model, rng)),
        slot_embed(init::embedding_table<S>(n_slots, cfg.d_model, rng)),
        variant(cfg.sha_variant),
        ablation(cfg.sha_ablation),
        dropout(cfg.dropout) {
    for (int i = 0; i < cfg.sha_layers; ++i)
      layers.emplace_back(cfg.d_model, cfg.effective_d_ff(), cfg.heads, rng);
  }

  Tensor<S> forward(const Tensor<S>& e, const Tensor<S>& e_u, const Tensor<S>& e_r,
                    const std::vector<uint8_t>* hist_mask, const std::vector<uint8_t>* utt_mask,
                    bool training, Rng* rng) const {
    if (e_u.defined() && e_r.defined() && e_u.rows() != e_r.rows())
      throw AlignmentError("history utterance/result sequences differ: " + std::to_string(e_u.rows()) +
                           " vs " + std::to_string(e_r.rows()));
    Tensor<S> x = e;
    for (const auto& layer : layers)
      x = layer.forward(x, e_u, e_r, hist_mask, utt_mask, variant, ablation, dropout, training, rng);
    return ops::add(x, e);
  }

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    m.add(prefix + ".intent_embed", intent_embed);
    m.add(prefix + ".slot_embed", slot_embed);
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].register_params(m, prefix + ".layer" + std::to_string(i));
  }
};

}  // namespace slu

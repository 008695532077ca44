#pragma once

#include <cmath>
#include <vector>

#include "slu/config.hpp"
#include "slu/nn.hpp"

namespace slu {

// Fixed sinusoidal position rows (constant, no gradient).
template <class S>
Tensor<S> sinusoid_positions(Index t, Index d) {
  Tensor<S> out = Tensor<S>::zeros({t, d});
  for (Index p = 0; p < t; ++p)
    for (Index i = 0; i < d; ++i) {
      double angle = static_cast<double>(p) / std::pow(10000.0, 2.0 * std::floor(i / 2.0) / static_cast<double>(d));
      out(p, i) = static_cast<S>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  return out;
}

template <class S>
struct DecoderLayer {
  MultiHeadAttention<S> self_attn, cross_attn;
  LayerNorm<S> norm_self, norm_cross, norm_ffn;
  FeedForward<S> ffn;

  DecoderLayer(Index d_model, Index d_ff, int heads, Rng& rng)
      : self_attn(d_model, heads, rng),
        cross_attn(d_model, heads, rng),
        norm_self(d_model),
        norm_cross(d_model),
        norm_ffn(d_model),
        ffn(d_model, d_ff, rng) {}

  Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& enc, const std::vector<uint8_t>* enc_mask,
                    double dropout, bool training, Rng* rng) const {
    auto drop = [&](const Tensor<S>& t) { return ops::dropout(t, dropout, training, rng); };
    Tensor<S> a = norm_self(ops::add(x, drop(self_attn(x, x, x, nullptr, /*causal=*/true))));
    Tensor<S> b = norm_cross(ops::add(a, drop(cross_attn(a, enc, enc, enc_mask))));
    return norm_ffn(ops::add(b, drop(ffn(b))));
  }

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    self_attn.register_params(m, prefix + ".self_attn");
    cross_attn.register_params(m, prefix + ".cross_attn");
    norm_self.register_params(m, prefix + ".norm_self");
    norm_cross.register_params(m, prefix + ".norm_cross");
    norm_ffn.register_params(m, prefix + ".norm_ffn");
    ffn.register_params(m, prefix + ".ffn");
  }
};

// Training-only autoregressive decoder over slot labels. Shares the encoder
// states through cross-attention; position j sees only labels < j. The BOS
// label is a dedicated extra id never emitted by the tagger.
template <class S>
struct SlgDecoder {
  Tensor<S> label_embed;  // [(d_s+1) x d_model]
  std::vector<DecoderLayer<S>> layers;
  Linear<S> classifier;  // d_model -> d_s
  int bos_id = 0;
  double dropout = 0.0;

  SlgDecoder(const RunConfig& cfg, int n_slots, Rng& rng)
      : label_embed(init::embedding_table<S>(n_slots + 1, cfg.d_model, rng)),
        classifier(cfg.d_model, n_slots, rng),
        bos_id(n_slots),
        dropout(cfg.dropout) {
    for (int i = 0; i < cfg.decoder_layers; ++i)
      layers.emplace_back(cfg.d_model, cfg.effective_d_ff(), cfg.heads, rng);
  }

  // Teacher forcing: shift gold right behind BOS.
  std::vector<int> shift_right(const std::vector<int>& gold) const {
    std::vector<int> in{bos_id};
    in.insert(in.end(), gold.begin(), gold.end() - (gold.empty() ? 0 : 1));
    return in;
  }

  // decoder_ids must match the encoder's real token count.
  Tensor<S> forward(const Tensor<S>& enc, const std::vector<uint8_t>* enc_mask,
                    const std::vector<int>& decoder_ids, Index n_tokens, bool training, Rng* rng) const {
    if (static_cast<Index>(decoder_ids.size()) != n_tokens)
      throw ContractError("decoder input length " + std::to_string(decoder_ids.size()) +
                          " != token count " + std::to_string(n_tokens));
    Tensor<S> x = ops::add(ops::embedding(label_embed, decoder_ids),
                           sinusoid_positions<S>(static_cast<Index>(decoder_ids.size()), label_embed.cols()));
    for (const auto& layer : layers) x = layer.forward(x, enc, enc_mask, dropout, training, rng);
    return ops::softmax_rows(classifier(x));
  }

  // Token-serial greedy decode: re-runs the decoder on the growing prefix.
  std::vector<int> greedy_decode(const Tensor<S>& enc, const std::vector<uint8_t>* enc_mask,
                                 Index n_tokens) const {
    std::vector<int> ids{bos_id};
    std::vector<int> out;
    for (Index j = 0; j < n_tokens; ++j) {
      Tensor<S> dist = forward(enc, enc_mask, ids, static_cast<Index>(ids.size()), false, nullptr);
      int next = ops::argmax_row(dist, dist.rows() - 1);
      out.push_back(next);
      ids.push_back(next);
    }
    return out;
  }

  void register_params(ParamMap<S>& m, const std::string& prefix) const {
    m.add(prefix + ".label_embed", label_embed);
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].register_params(m, prefix + ".layer" + std::to_string(i));
    classifier.register_params(m, prefix + ".classifier");
  }
};

}  // namespace slu

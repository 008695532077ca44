#pragma once

#include <optional>
#include <vector>

#include "slu/config.hpp"
#include "slu/data.hpp"
#include "slu/encoder.hpp"
#include "slu/nn.hpp"
#include "slu/optim.hpp"
#include "slu/sha.hpp"
#include "slu/slg.hpp"

namespace slu {

struct Prediction {
  int intent = -1;
  std::vector<int> slots;
};

// One utterance plus its history, as id sequences. Rows come either from a
// Batch or straight from a session turn.
struct ExampleView {
  std::vector<int> tokens;       // CLS + token ids (+ optional PAD fill)
  std::vector<uint8_t> mask;     // 1 on CLS + real tokens
  int n = 0;                     // real token count
  std::vector<int> gold_slots;   // length n
  int gold_intent = -1;
  std::vector<int> hist_utt;
  std::vector<int> hist_res;
  std::vector<uint8_t> hist_is_intent;
  std::vector<uint8_t> hist_mask;

  bool has_history() const { return !hist_utt.empty(); }

  static ExampleView from_batch(const Batch& b, size_t i) {
    ExampleView ex;
    ex.tokens = b.tokens[i];
    ex.mask = b.mask[i];
    ex.n = static_cast<int>(b.gold_slots[i].size());
    ex.gold_slots = b.gold_slots[i];
    ex.gold_intent = b.gold_intent[i];
    ex.hist_utt = b.hist_utt[i];
    ex.hist_res = b.hist_res[i];
    ex.hist_is_intent = b.hist_is_intent[i];
    ex.hist_mask = b.hist_mask[i];
    return ex;
  }

  static ExampleView from_turn(const DialogueSession& s, int turn_index, HistorySource source) {
    const Turn& t = s.turns[static_cast<size_t>(turn_index)];
    ExampleView ex;
    ex.tokens.push_back(kClsId);
    for (int id : t.token_ids) ex.tokens.push_back(id);
    ex.mask.assign(ex.tokens.size(), 1);
    ex.n = t.n();
    ex.gold_slots = t.slot_ids;
    ex.gold_intent = t.intent_id;
    HistoryBundle h = build_history(s, turn_index, source);
    ex.hist_utt = std::move(h.utt_ids);
    ex.hist_res = std::move(h.res_ids);
    ex.hist_is_intent = std::move(h.res_is_intent);
    ex.hist_mask.assign(ex.hist_utt.size(), 1);
    return ex;
  }
};

// The full model: token embedding, history attention, relative-position
// encoder with mid-stack refinement, classifier heads, and (training only)
// the label-generation decoder.
template <class S>
struct Model {
  RunConfig cfg;
  int vocab_size = 0, n_intents = 0, n_slots = 0;

  Tensor<S> token_embed;  // [V x d]
  std::optional<Sha<S>> sha;
  std::vector<EncoderLayer<S>> enc_layers;
  std::optional<Lrm<S>> lrm;
  Heads<S> heads;
  std::optional<SlgDecoder<S>> slg;

  Model(const RunConfig& config, int vocab, int d_i, int d_s, bool with_decoder, Rng& rng)
      : cfg(config), vocab_size(vocab), n_intents(d_i), n_slots(d_s) {
    cfg.validate();
    token_embed = init::embedding_table<S>(vocab, cfg.d_model, rng);
    if (cfg.sha_active()) sha.emplace(cfg, d_i, d_s, rng);
    for (int i = 0; i < cfg.encoder_layers; ++i) enc_layers.emplace_back(cfg, rng);
    if (cfg.lrm_enabled) lrm.emplace(cfg, d_i, d_s, rng);
    heads = Heads<S>(cfg.d_model, d_i, d_s, rng);
    if (with_decoder && cfg.slg_enabled && cfg.lambda > 0.0) slg.emplace(cfg, d_s, rng);
  }

  ParamMap<S> parameters() const {
    ParamMap<S> m;
    m.add("embed.token", token_embed);
    if (sha) sha->register_params(m, "sha");
    for (size_t i = 0; i < enc_layers.size(); ++i)
      enc_layers[i].register_params(m, "encoder.layer" + std::to_string(i));
    heads.register_params(m, "heads");
    if (lrm) lrm->register_params(m, "lrm");
    if (slg) slg->register_params(m, "slg");
    return m;
  }

  struct ForwardOut {
    Tensor<S> enc_states;     // [(n_max+1) x d]
    Tensor<S> intent_dist;    // [1 x d_i]
    Tensor<S> slot_dist;      // [n x d_s]
    Tensor<S> intent_logits;  // pre-softmax, for argmax
    Tensor<S> slot_logits;
    Tensor<S> prelim_intent;  // defined when the refinement step ran
    Tensor<S> prelim_slots;
  };

  ForwardOut forward(const ExampleView& ex, bool training, Rng* rng) const {
    Tensor<S> e = ops::embedding(token_embed, ex.tokens);
    Tensor<S> x = e;
    if (sha) {
      Tensor<S> e_u, e_r;
      const std::vector<uint8_t>* hmask = nullptr;
      if (ex.has_history()) {
        e_u = ops::embedding(token_embed, ex.hist_utt);
        e_r = ops::dual_embedding(sha->intent_embed, sha->slot_embed, ex.hist_res, ex.hist_is_intent);
        hmask = &ex.hist_mask;
      }
      x = sha->forward(e, e_u, e_r, hmask, &ex.mask, training, rng);
    }

    ForwardOut out;
    for (size_t j = 0; j < enc_layers.size(); ++j) {
      x = enc_layers[j].forward(x, &ex.mask, training, rng);
      if (lrm && layer_has_refinement(static_cast<int>(j) + 1)) {
        auto refined = lrm->apply(x, heads, ex.n);
        x = refined.h;
        if (!out.prelim_intent.defined()) {
          out.prelim_intent = refined.prelim_intent;
          out.prelim_slots = refined.prelim_slots;
        }
      }
    }
    out.enc_states = x;
    auto logits = heads.classify(x, ex.n);
    out.intent_logits = logits.intent;
    out.slot_logits = logits.slot;
    out.intent_dist = ops::softmax_rows(logits.intent);
    out.slot_dist = ops::softmax_rows(logits.slot);
    return out;
  }

  bool layer_has_refinement(int k) const {
    for (int p : cfg.lrm_positions)
      if (p == k) return true;
    return false;
  }

  Prediction predict(const ExampleView& ex) const {
    ForwardOut out = forward(ex, false, nullptr);
    Prediction p;
    p.intent = ops::argmax_row(out.intent_logits, 0);
    for (Index j = 0; j < ex.n; ++j) p.slots.push_back(ops::argmax_row(out.slot_logits, j));
    return p;
  }
};

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// -log P(intent) - sum_j log P(slot_j); padded positions never reach here
// because slot_dist only covers real tokens.
template <class S>
Tensor<S> slu_loss(const Tensor<S>& intent_dist, const Tensor<S>& slot_dist, int gold_intent,
                   const std::vector<int>& gold_slots) {
  if (static_cast<Index>(gold_slots.size()) != slot_dist.rows())
    throw ContractError("slu_loss: " + std::to_string(gold_slots.size()) + " gold slots for " +
                        std::to_string(slot_dist.rows()) + " predictions");
  return ops::add(ops::cross_entropy(intent_dist, gold_intent), ops::ce_hard_rows(slot_dist, gold_slots));
}

// (1-alpha) * generation NLL + alpha * soft cross-entropy against the
// tagger's distributions. The tagger side is treated as the target with
// gradients blocked unless grad_both is set.
template <class S>
Tensor<S> slg_loss(const Tensor<S>& gen_dist, const std::vector<int>& gold_slots,
                   const Tensor<S>& slot_dist, double alpha, bool grad_both = false) {
  if (gen_dist.rows() != slot_dist.rows())
    throw ContractError("slg_loss: generator length " + std::to_string(gen_dist.rows()) +
                        " != tagger length " + std::to_string(slot_dist.rows()));
  Tensor<S> nll = ops::ce_hard_rows(gen_dist, gold_slots);
  Tensor<S> target = grad_both ? slot_dist : ops::detach(slot_dist);
  Tensor<S> consistency = ops::ce_soft_rows(gen_dist, target, nullptr, grad_both);
  return ops::add(ops::scale(nll, static_cast<S>(1.0 - alpha)), ops::scale(consistency, static_cast<S>(alpha)));
}

struct BatchLoss {
  double total = 0, slu = 0, slg = 0;
};

// Forward + losses for one batch; returns the scalar tensors for backward.
template <class S>
struct JointStepOut {
  Tensor<S> total, slu, slg;
};

template <class S>
JointStepOut<S> joint_batch_loss(const Model<S>& model, const Batch& batch, bool training, Rng* rng) {
  Tensor<S> slu_sum = Tensor<S>::scalar(0);
  Tensor<S> slg_sum = Tensor<S>::scalar(0);
  for (size_t i = 0; i < batch.size(); ++i) {
    ExampleView ex = ExampleView::from_batch(batch, i);
    auto out = model.forward(ex, training, rng);
    slu_sum = ops::add(slu_sum, slu_loss(out.intent_dist, out.slot_dist, ex.gold_intent, ex.gold_slots));
    if (model.cfg.lrm_intermediate_loss && out.prelim_intent.defined())
      slu_sum = ops::add(slu_sum, slu_loss(out.prelim_intent, out.prelim_slots, ex.gold_intent, ex.gold_slots));
    if (model.slg) {
      Tensor<S> enc = out.enc_states;
      Tensor<S> gen = model.slg->forward(enc, &ex.mask, model.slg->shift_right(ex.gold_slots),
                                         ex.n, training, rng);
      slg_sum = ops::add(slg_sum, slg_loss(gen, ex.gold_slots, out.slot_dist, model.cfg.alpha,
                                           model.cfg.slg_consistency_both));
    }
  }
  S inv_b = static_cast<S>(1.0 / static_cast<double>(batch.size()));
  JointStepOut<S> out;
  out.slu = ops::scale(slu_sum, inv_b);
  out.slg = ops::scale(slg_sum, inv_b);
  out.total = ops::add(out.slu, ops::scale(out.slg, static_cast<S>(model.cfg.lambda)));
  return out;
}

}  // namespace slu

#pragma once

// Shared test utilities: finite-difference gradient oracle, an independent
// brute-force chunker, and synthetic corpus generators. Everything here is
// test-only and must stay independent of the implementation paths it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "slu/data.hpp"
#include "slu/model.hpp"
#include "slu/nn.hpp"
#include "slu/rng.hpp"
#include "slu/tensor.hpp"

namespace testutil {

using slu::Index;

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  size_t checked = 0;
};

inline double rel_err(double analytic, double numeric) {
  double diff = std::fabs(analytic - numeric);
  if (diff <= 1e-8) return 0.0;  // absolute floor for near-zero gradients
  return diff / std::max(std::fabs(analytic), std::fabs(numeric));
}

// Central finite differences of `loss` (a fresh forward pass on every call)
// against the analytic gradients already accumulated in `params`.
template <class S, class LossFn>
FdReport fd_check(slu::ParamMap<S>& params, LossFn&& loss, double h = 1e-5) {
  // analytic gradients
  std::vector<std::vector<double>> analytic;
  {
    for (auto& [name, t] : params.items) t.zero_grad();
    slu::Tape<S> tape;
    slu::Tensor<S> L = loss();
    tape.backward(L);
    for (auto& [name, t] : params.items) {
      std::vector<double> g(static_cast<size_t>(t.numel()), 0.0);
      if (t.has_grad())
        for (Index i = 0; i < t.numel(); ++i) g[static_cast<size_t>(i)] = static_cast<double>(t.grad_data()[i]);
      analytic.push_back(std::move(g));
    }
  }
  FdReport rep;
  for (size_t pi = 0; pi < params.items.size(); ++pi) {
    auto& [name, t] = params.items[pi];
    for (Index i = 0; i < t.numel(); ++i) {
      S saved = t.data()[i];
      t.data()[i] = saved + static_cast<S>(h);
      double fp = static_cast<double>(loss().item());
      t.data()[i] = saved - static_cast<S>(h);
      double fm = static_cast<double>(loss().item());
      t.data()[i] = saved;
      double numeric = (fp - fm) / (2.0 * h);
      double e = rel_err(analytic[pi][static_cast<size_t>(i)], numeric);
      ++rep.checked;
      if (e > rep.max_rel_err) {
        rep.max_rel_err = e;
        rep.worst_param = name;
        rep.worst_index = i;
      }
    }
  }
  return rep;
}

// Convenience for checking single tensors.
template <class S, class LossFn>
FdReport fd_check_tensors(std::vector<slu::Tensor<S>> tensors, LossFn&& loss, double h = 1e-5) {
  slu::ParamMap<S> m;
  for (size_t i = 0; i < tensors.size(); ++i) m.add("t" + std::to_string(i), tensors[i]);
  return fd_check(m, std::forward<LossFn>(loss), h);
}

// ---------------------------------------------------------------------------
// brute-force IOB chunking (independent oracle)
// ---------------------------------------------------------------------------

// Enumerates every candidate span and keeps those that read as one maximal
// chunk under lenient IOB semantics. Deliberately quadratic and direct.
inline std::set<std::tuple<std::string, int, int>> brute_force_chunks(const std::vector<std::string>& labels) {
  int n = static_cast<int>(labels.size());
  auto type_of = [&](int i) -> std::string {
    const std::string& l = labels[static_cast<size_t>(i)];
    return l == "O" ? std::string() : l.substr(2);
  };
  auto starts_chunk = [&](int i) {
    const std::string& l = labels[static_cast<size_t>(i)];
    if (l == "O") return false;
    if (l[0] == 'B') return true;
    // lenient: I-x starts a chunk unless the previous label is of type x
    return i == 0 || type_of(i - 1) != type_of(i);
  };
  std::set<std::tuple<std::string, int, int>> out;
  for (int s = 0; s < n; ++s) {
    if (!starts_chunk(s)) continue;
    int e = s;
    while (e + 1 < n) {
      const std::string& nxt = labels[static_cast<size_t>(e + 1)];
      if (nxt.rfind("I-", 0) == 0 && type_of(e + 1) == type_of(s)) ++e;
      else break;
    }
    out.insert({type_of(s), s, e});
  }
  return out;
}

// Micro F1 computed straight from the brute-force chunk sets.
inline std::tuple<double, double, double> brute_force_f1(
    const std::vector<std::vector<std::string>>& gold, const std::vector<std::vector<std::string>>& pred) {
  int64_t match = 0, ng = 0, np = 0;
  for (size_t u = 0; u < gold.size(); ++u) {
    auto g = brute_force_chunks(gold[u]);
    auto p = brute_force_chunks(pred[u]);
    ng += static_cast<int64_t>(g.size());
    np += static_cast<int64_t>(p.size());
    for (const auto& c : p)
      if (g.count(c)) ++match;
  }
  double pr = np ? double(match) / double(np) : 0.0;
  double rc = ng ? double(match) / double(ng) : 0.0;
  double f1 = (pr + rc) > 0 ? 2 * pr * rc / (pr + rc) : 0.0;
  return {pr, rc, f1};
}

// Random IOB label sequence over `n_types` slot types.
inline std::vector<std::string> random_iob(slu::Rng& rng, int len, int n_types) {
  std::vector<std::string> out;
  for (int i = 0; i < len; ++i) {
    int r = static_cast<int>(rng.below(4));
    if (r == 0) out.push_back("O");
    else {
      std::string ty = "t" + std::to_string(rng.below(static_cast<uint64_t>(n_types)));
      out.push_back((r == 1 ? "B-" : "I-") + ty);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic corpora
// ---------------------------------------------------------------------------

// Dialogues whose labels are a deterministic function of the token, so a
// small model can reach full training accuracy. Token wN maps to slot
// s(N mod n_slot_types) and the intent comes from the first token.
inline std::vector<slu::DialogueSession> deterministic_dialogues(slu::Rng& rng, int n_dialogues,
                                                                 int max_turns, int n_tokens,
                                                                 int n_intents, int n_slot_types) {
  std::vector<slu::DialogueSession> sessions;
  for (int d = 0; d < n_dialogues; ++d) {
    slu::DialogueSession s;
    s.id = "dlg-" + std::to_string(d);
    int turns = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_turns)));
    for (int t = 0; t < turns; ++t) {
      slu::Turn turn;
      int len = 2 + static_cast<int>(rng.below(4));
      for (int j = 0; j < len; ++j) {
        int w = static_cast<int>(rng.below(static_cast<uint64_t>(n_tokens)));
        turn.tokens.push_back("w" + std::to_string(w));
        int ty = w % n_slot_types;
        turn.slots.push_back(w % 3 == 0 ? "O" : (w % 3 == 1 ? "B-s" : "I-s") + std::to_string(ty));
      }
      // keep the label set IOB-closed
      turn.intent = "intent" + std::to_string((turn.tokens[0].back() - '0') % n_intents);
      s.turns.push_back(std::move(turn));
    }
    sessions.push_back(std::move(s));
  }
  // guarantee every I-sx has a B-sx somewhere in the corpus
  slu::DialogueSession closure;
  closure.id = "dlg-closure";
  slu::Turn t;
  for (int ty = 0; ty < n_slot_types; ++ty) {
    t.tokens.push_back("b" + std::to_string(ty));
    t.slots.push_back("B-s" + std::to_string(ty));
    t.tokens.push_back("i" + std::to_string(ty));
    t.slots.push_back("I-s" + std::to_string(ty));
  }
  t.intent = "intent0";
  closure.turns.push_back(std::move(t));
  sessions.push_back(std::move(closure));
  return sessions;
}

// Corpus where turn-2 labels are decidable only from turn-1 content. Every
// topic shares the identical second-turn utterance; its slots and intent
// depend on the topic word observed in turn 1.
inline std::vector<slu::DialogueSession> history_only_dialogues(int n_per_topic, int n_topics) {
  std::vector<slu::DialogueSession> sessions;
  int id = 0;
  for (int rep = 0; rep < n_per_topic; ++rep) {
    for (int topic = 0; topic < n_topics; ++topic) {
      slu::DialogueSession s;
      s.id = "hist-" + std::to_string(id++);
      slu::Turn t1;
      t1.tokens = {"please", "topic" + std::to_string(topic), "now"};
      t1.slots = {"O", "B-obj" + std::to_string(topic), "O"};
      t1.intent = "intent" + std::to_string(topic);
      slu::Turn t2;
      t2.tokens = {"confirm", "the", "thing"};
      t2.slots = {"O", "O", "B-res" + std::to_string(topic)};
      t2.intent = "intent" + std::to_string(topic);
      s.turns.push_back(std::move(t1));
      s.turns.push_back(std::move(t2));
      sessions.push_back(std::move(s));
    }
  }
  return sessions;
}

// Random well-formed sessions for structural property tests.
inline std::vector<slu::DialogueSession> random_sessions(slu::Rng& rng, int n, int max_turns, int max_len) {
  std::vector<slu::DialogueSession> sessions;
  for (int i = 0; i < n; ++i) {
    slu::DialogueSession s;
    s.id = "r-" + std::to_string(i);
    int turns = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_turns)));
    for (int t = 0; t < turns; ++t) {
      slu::Turn turn;
      int len = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_len)));
      for (int j = 0; j < len; ++j) {
        turn.tokens.push_back("tok" + std::to_string(rng.below(40)));
        int r = static_cast<int>(rng.below(3));
        turn.slots.push_back(r == 0 ? "O" : (r == 1 ? "B-a" : "I-a"));
      }
      turn.intent = "i" + std::to_string(rng.below(3));
      s.turns.push_back(std::move(turn));
    }
    sessions.push_back(std::move(s));
  }
  // closure turn so I-a always has B-a in the set
  sessions[0].turns[0].tokens.push_back("anchor");
  sessions[0].turns[0].slots.push_back("B-a");
  return sessions;
}

// Small RunConfig for fast tests.
inline slu::RunConfig tiny_config(int d_model = 16, int heads = 2, int sha_layers = 1,
                                  int encoder_layers = 2, int decoder_layers = 1) {
  slu::RunConfig cfg;
  cfg.d_model = d_model;
  cfg.heads = heads;
  cfg.d_ff = 2 * d_model;
  cfg.sha_layers = sha_layers;
  cfg.encoder_layers = encoder_layers;
  cfg.decoder_layers = decoder_layers;
  cfg.rel_pos_clip = 3;
  cfg.dropout = 0.0;
  cfg.lrm_positions = {1};
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  return cfg;
}

}  // namespace testutil

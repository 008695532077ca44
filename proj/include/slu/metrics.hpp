#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slu/data.hpp"
#include "slu/errors.hpp"

namespace slu {

// Maximal same-type span, inclusive indices.
struct Chunk {
  std::string type;
  int start = 0, end = 0;

  bool operator==(const Chunk& o) const { return type == o.type && start == o.start && end == o.end; }
  bool operator<(const Chunk& o) const {
    return std::tie(start, end, type) < std::tie(o.start, o.end, o.type);
  }
};

// IOB reading with the lenient conlleval rule: a bare I-x with no open chunk
// of type x starts one.
inline std::vector<Chunk> extract_chunks(const std::vector<std::string>& labels) {
  std::vector<Chunk> chunks;
  std::string open_type;
  int open_start = -1;
  auto close = [&](int end) {
    if (open_start >= 0) chunks.push_back({open_type, open_start, end});
    open_start = -1;
    open_type.clear();
  };
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    const std::string& lab = labels[static_cast<size_t>(i)];
    if (lab == "O") {
      close(i - 1);
    } else if (lab.rfind("B-", 0) == 0) {
      close(i - 1);
      open_type = lab.substr(2);
      open_start = i;
    } else if (lab.rfind("I-", 0) == 0) {
      std::string ty = lab.substr(2);
      if (open_start < 0 || open_type != ty) {
        close(i - 1);
        open_type = ty;
        open_start = i;
      }
    } else {
      throw LabelError("not an IOB label: '" + lab + "'");
    }
  }
  close(static_cast<int>(labels.size()) - 1);
  return chunks;
}

inline std::vector<std::string> ids_to_slot_strings(const std::vector<int>& ids, const LabelSets& labels) {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id < 0 || id >= labels.n_slots())
      throw LabelError("slot id " + std::to_string(id) + " out of range");
    out.push_back(labels.slots[static_cast<size_t>(id)]);
  }
  return out;
}

struct PrF1 {
  double precision = 0, recall = 0, f1 = 0;
  int64_t matched = 0, n_gold = 0, n_pred = 0;
};

// Micro-averaged exact-match chunk F1 over the corpus.
inline PrF1 slot_f1(const std::vector<std::vector<std::string>>& gold,
                    const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size())
    throw ContractError("slot_f1: " + std::to_string(gold.size()) + " gold vs " +
                        std::to_string(pred.size()) + " predicted utterances");
  PrF1 r;
  for (size_t u = 0; u < gold.size(); ++u) {
    if (gold[u].size() != pred[u].size())
      throw ContractError("slot_f1: utterance " + std::to_string(u) + " length mismatch");
    auto gc = extract_chunks(gold[u]);
    auto pc = extract_chunks(pred[u]);
    std::sort(gc.begin(), gc.end());
    std::sort(pc.begin(), pc.end());
    std::vector<Chunk> both;
    std::set_intersection(gc.begin(), gc.end(), pc.begin(), pc.end(), std::back_inserter(both));
    r.matched += static_cast<int64_t>(both.size());
    r.n_gold += static_cast<int64_t>(gc.size());
    r.n_pred += static_cast<int64_t>(pc.size());
  }
  r.precision = r.n_pred ? static_cast<double>(r.matched) / static_cast<double>(r.n_pred) : 0.0;
  r.recall = r.n_gold ? static_cast<double>(r.matched) / static_cast<double>(r.n_gold) : 0.0;
  r.f1 = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

inline double intent_accuracy(const std::vector<int>& gold, const std::vector<int>& pred) {
  if (gold.size() != pred.size()) throw ContractError("intent_accuracy: corpus size mismatch");
  if (gold.empty()) return 0.0;
  int64_t ok = 0;
  for (size_t i = 0; i < gold.size(); ++i) ok += gold[i] == pred[i];
  return static_cast<double>(ok) / static_cast<double>(gold.size());
}

// Utterance counts iff the intent and every slot label are correct.
inline double overall_accuracy(const std::vector<int>& gold_intent, const std::vector<int>& pred_intent,
                               const std::vector<std::vector<int>>& gold_slots,
                               const std::vector<std::vector<int>>& pred_slots) {
  if (gold_intent.size() != pred_intent.size() || gold_slots.size() != pred_slots.size() ||
      gold_intent.size() != gold_slots.size())
    throw ContractError("overall_accuracy: corpus size mismatch");
  if (gold_intent.empty()) return 0.0;
  int64_t ok = 0;
  for (size_t i = 0; i < gold_intent.size(); ++i) {
    if (gold_intent[i] != pred_intent[i]) continue;
    if (gold_slots[i] != pred_slots[i]) continue;
    ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(gold_intent.size());
}

struct UncReport {
  int64_t slot_errors = 0;  // position-wise pred != gold
  int64_t unc = 0, bi = 0, ib = 0;
};

// Per gold chunk of length >= 2: a correct B position with at least one wrong
// I position is a BI error; a wrong B position with every I position correct
// is an IB error. A chunk where both sides are wrong counts plain slot errors
// only. Each gold chunk contributes at most one uncoordinated error.
inline UncReport uncoordinated_analysis(const std::vector<std::vector<std::string>>& gold,
                                        const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size()) throw ContractError("uncoordinated_analysis: corpus size mismatch");
  UncReport r;
  for (size_t u = 0; u < gold.size(); ++u) {
    const auto& g = gold[u];
    const auto& p = pred[u];
    if (g.size() != p.size())
      throw ContractError("uncoordinated_analysis: utterance " + std::to_string(u) + " length mismatch");
    for (size_t j = 0; j < g.size(); ++j) r.slot_errors += g[j] != p[j];
    for (const Chunk& c : extract_chunks(g)) {
      if (c.end == c.start) continue;  // single-token chunks cannot disagree B vs I
      bool b_ok = p[static_cast<size_t>(c.start)] == g[static_cast<size_t>(c.start)];
      bool all_i_ok = true, any_i_wrong = false;
      for (int j = c.start + 1; j <= c.end; ++j) {
        bool ok = p[static_cast<size_t>(j)] == g[static_cast<size_t>(j)];
        all_i_ok = all_i_ok && ok;
        any_i_wrong = any_i_wrong || !ok;
      }
      if (b_ok && any_i_wrong) {
        ++r.bi;
        ++r.unc;
      } else if (!b_ok && all_i_ok) {
        ++r.ib;
        ++r.unc;
      }
    }
  }
  return r;
}

struct LatencyStats {
  double mean_ms = 0, p50_ms = 0, p95_ms = 0;
  int64_t count = 0;
};

inline LatencyStats summarize_latencies(std::vector<double> ms) {
  LatencyStats s;
  s.count = static_cast<int64_t>(ms.size());
  if (ms.empty()) return s;
  double sum = 0;
  for (double x : ms) sum += x;
  s.mean_ms = sum / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  auto pct = [&](double q) {
    size_t i = static_cast<size_t>(q * static_cast<double>(ms.size() - 1));
    return ms[i];
  };
  s.p50_ms = pct(0.50);
  s.p95_ms = pct(0.95);
  return s;
}

// Times `predict_one(i)` for every item, one call at a time on one thread.
// `repetitions` full passes over the items; the first `warmup` calls are
// discarded.
template <class Fn>
LatencyStats bench_latency(Fn&& predict_one, size_t n_items, int repetitions, int warmup) {
  if (repetitions <= 0) throw ConfigError("bench repetitions must be >= 1");
  if (n_items == 0) throw ConfigError("bench corpus is empty");
  using clock = std::chrono::steady_clock;
  for (int w = 0; w < warmup; ++w) predict_one(w % n_items);
  std::vector<double> ms;
  ms.reserve(static_cast<size_t>(repetitions) * n_items);
  for (int r = 0; r < repetitions; ++r)
    for (size_t i = 0; i < n_items; ++i) {
      auto t0 = clock::now();
      predict_one(i);
      auto t1 = clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  return summarize_latencies(std::move(ms));
}

struct PositionBucket {
  double intent_acc = 0, slot_f1 = 0;
  int64_t count = 0;
};

struct EvalReport {
  double intent_accuracy = 0;
  double slot_precision = 0, slot_recall = 0, slot_f1 = 0;
  double overall_accuracy = 0;
  int64_t slot_error_count = 0;
  int64_t unc_errors = 0, bi_errors = 0, ib_errors = 0;
  PositionBucket early, medium, late;
  LatencyStats latency;
  int64_t n_utterances = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["intent_accuracy"] = intent_accuracy;
    j["slot_precision"] = slot_precision;
    j["slot_recall"] = slot_recall;
    j["slot_f1"] = slot_f1;
    j["overall_accuracy"] = overall_accuracy;
    j["slot_error_count"] = slot_error_count;
    j["unc_errors"] = unc_errors;
    j["bi_errors"] = bi_errors;
    j["ib_errors"] = ib_errors;
    auto bucket = [](const PositionBucket& b) {
      return nlohmann::json{{"intent_acc", b.intent_acc}, {"slot_f1", b.slot_f1}, {"count", b.count}};
    };
    j["position_breakdown"] = {{"early", bucket(early)}, {"medium", bucket(medium)}, {"late", bucket(late)}};
    j["latency"] = {{"mean_ms", latency.mean_ms},
                    {"p50_ms", latency.p50_ms},
                    {"p95_ms", latency.p95_ms},
                    {"count", latency.count}};
    j["n_utterances"] = n_utterances;
    return j;
  }
};

// Turn-index tercile within its dialogue, ceil split: 0 early, 1 medium, 2 late.
inline int position_bucket(int turn_index, int n_turns) {
  int per = (n_turns + 2) / 3;
  return std::min(2, turn_index / per);
}

}  // namespace slu

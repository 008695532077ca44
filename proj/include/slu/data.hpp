#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "slu/config.hpp"
#include "slu/errors.hpp"
#include "slu/rng.hpp"

namespace slu {

// Reserved token ids.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;

struct Vocab {
  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;  // index == id

  Vocab() {
    for (const char* s : {"<pad>", "<unk>", "<cls>"}) {
      token_to_id[s] = static_cast<int>(id_to_token.size());
      id_to_token.emplace_back(s);
    }
  }

  int size() const { return static_cast<int>(id_to_token.size()); }

  int add(const std::string& tok) {
    auto it = token_to_id.find(tok);
    if (it != token_to_id.end()) return it->second;
    int id = size();
    token_to_id[tok] = id;
    id_to_token.push_back(tok);
    return id;
  }

  // OOV maps to <unk>.
  int lookup(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? kUnkId : it->second;
  }
};

struct LabelSets {
  std::vector<std::string> intents;
  std::vector<std::string> slots;  // IOB strings: "O", "B-x", "I-x"
  std::unordered_map<std::string, int> intent_to_id, slot_to_id;

  int n_intents() const { return static_cast<int>(intents.size()); }
  int n_slots() const { return static_cast<int>(slots.size()); }

  int add_intent(const std::string& s) {
    auto it = intent_to_id.find(s);
    if (it != intent_to_id.end()) return it->second;
    int id = n_intents();
    intent_to_id[s] = id;
    intents.push_back(s);
    return id;
  }

  int add_slot(const std::string& s) {
    auto it = slot_to_id.find(s);
    if (it != slot_to_id.end()) return it->second;
    int id = n_slots();
    slot_to_id[s] = id;
    slots.push_back(s);
    return id;
  }

  int intent_id(const std::string& s) const {
    auto it = intent_to_id.find(s);
    if (it == intent_to_id.end()) throw SchemaError("unknown intent label '" + s + "'");
    return it->second;
  }

  int slot_id(const std::string& s) const {
    auto it = slot_to_id.find(s);
    if (it == slot_to_id.end()) throw SchemaError("unknown slot label '" + s + "'");
    return it->second;
  }

  // Every I-x requires a matching B-x in the set.
  void check_iob_closure() const {
    for (const auto& s : slots) {
      if (s.rfind("I-", 0) == 0) {
        std::string b = "B-" + s.substr(2);
        if (!slot_to_id.count(b))
          throw LabelError("slot label set contains '" + s + "' without '" + b + "'");
      }
    }
  }
};

struct Turn {
  std::vector<std::string> tokens;
  std::vector<std::string> slots;
  std::string intent;

  // filled by index_sessions()
  std::vector<int> token_ids;
  std::vector<int> slot_ids;
  int intent_id = -1;

  // recorded as the dialogue is processed
  std::optional<int> predicted_intent;
  std::optional<std::vector<int>> predicted_slots;

  int n() const { return static_cast<int>(tokens.size()); }
};

struct DialogueSession {
  std::string id;
  std::vector<Turn> turns;
};

// ---------------------------------------------------------------------------
// corpus I/O  (JSON-lines; one dialogue per line)
// ---------------------------------------------------------------------------

inline std::string lowercased(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline std::vector<DialogueSession> load_sessions(const std::string& path, TaskMode format) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open corpus file '" + path + "'");
  std::vector<DialogueSession> sessions;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(trimmed);
    } catch (const std::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    DialogueSession s;
    try {
      s.id = j.at("id").get<std::string>();
      for (const auto& tj : j.at("turns")) {
        Turn t;
        for (const auto& tok : tj.at("tokens")) t.tokens.push_back(lowercased(tok.get<std::string>()));
        for (const auto& sl : tj.at("slots")) t.slots.push_back(sl.get<std::string>());
        t.intent = tj.at("intent").get<std::string>();
        if (t.tokens.size() != t.slots.size())
          throw ParseError(path + ":" + std::to_string(lineno) + ": |slots| " + std::to_string(t.slots.size()) +
                           " != |tokens| " + std::to_string(t.tokens.size()));
        if (t.tokens.empty())
          throw ParseError(path + ":" + std::to_string(lineno) + ": empty turn");
        s.turns.push_back(std::move(t));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (s.turns.empty()) throw ParseError(path + ":" + std::to_string(lineno) + ": dialogue has no turns");
    if (format == TaskMode::single_turn && s.turns.size() != 1)
      throw ParseError(path + ":" + std::to_string(lineno) + ": single-turn record with " +
                       std::to_string(s.turns.size()) + " turns");
    sessions.push_back(std::move(s));
  }
  return sessions;
}

inline void save_sessions(const std::string& path, const std::vector<DialogueSession>& sessions) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write corpus file '" + path + "'");
  for (const auto& s : sessions) {
    nlohmann::json j;
    j["id"] = s.id;
    j["turns"] = nlohmann::json::array();
    for (const auto& t : s.turns) {
      nlohmann::json tj;
      tj["tokens"] = t.tokens;
      tj["slots"] = t.slots;
      tj["intent"] = t.intent;
      j["turns"].push_back(tj);
    }
    f << j.dump() << "\n";
  }
}

// Tab-separated token/slot lines, blank-line separated utterances, each block
// terminated by "#intent=<label>". Produces single-turn JSONL records.
inline std::vector<DialogueSession> parse_conll(std::istream& in, const std::string& name) {
  std::vector<DialogueSession> sessions;
  Turn cur;
  int lineno = 0, idx = 0;
  auto flush = [&](bool has_intent) {
    if (cur.tokens.empty() && !has_intent) return;
    if (cur.tokens.empty()) throw ParseError(name + ":" + std::to_string(lineno) + ": intent with no tokens");
    if (cur.intent.empty()) throw ParseError(name + ":" + std::to_string(lineno) + ": utterance missing #intent line");
    DialogueSession s;
    s.id = "utt-" + std::to_string(idx++);
    s.turns.push_back(cur);
    sessions.push_back(std::move(s));
    cur = Turn{};
  };
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(line);
    if (s.empty()) continue;
    if (s.rfind("#intent=", 0) == 0) {
      cur.intent = detail::trim(s.substr(8));
      flush(true);
      continue;
    }
    size_t tab = s.find('\t');
    if (tab == std::string::npos) tab = s.find(' ');
    if (tab == std::string::npos)
      throw ParseError(name + ":" + std::to_string(lineno) + ": expected token<TAB>slot, got '" + s + "'");
    cur.tokens.push_back(lowercased(detail::trim(s.substr(0, tab))));
    cur.slots.push_back(detail::trim(s.substr(tab + 1)));
  }
  if (!cur.tokens.empty()) throw ParseError(name + ": trailing utterance without #intent line");
  return sessions;
}

inline void convert_conll(const std::string& in_path, const std::string& out_path) {
  std::ifstream f(in_path);
  if (!f) throw IoError("cannot open conll file '" + in_path + "'");
  save_sessions(out_path, parse_conll(f, in_path));
}

// ---------------------------------------------------------------------------
// vocabulary / label indexing
// ---------------------------------------------------------------------------

inline Vocab build_vocab(const std::vector<DialogueSession>& train_sessions) {
  Vocab v;
  for (const auto& s : train_sessions)
    for (const auto& t : s.turns)
      for (const auto& tok : t.tokens) v.add(tok);
  return v;
}

inline LabelSets build_labels(const std::vector<DialogueSession>& train_sessions) {
  LabelSets ls;
  for (const auto& s : train_sessions)
    for (const auto& t : s.turns) {
      ls.add_intent(t.intent);
      for (const auto& sl : t.slots) ls.add_slot(sl);
    }
  ls.check_iob_closure();
  return ls;
}

inline void index_sessions(std::vector<DialogueSession>& sessions, const Vocab& vocab, const LabelSets& labels) {
  for (auto& s : sessions)
    for (auto& t : s.turns) {
      t.token_ids.clear();
      t.slot_ids.clear();
      for (const auto& tok : t.tokens) t.token_ids.push_back(vocab.lookup(tok));
      for (const auto& sl : t.slots) t.slot_ids.push_back(labels.slot_id(sl));
      t.intent_id = labels.intent_id(t.intent);
    }
}

struct Corpus {
  std::vector<DialogueSession> sessions;
  Vocab vocab;
  LabelSets labels;
};

// Vocab and label sets come from this file (the training split).
inline Corpus load_corpus(const std::string& path, TaskMode format) {
  Corpus c;
  c.sessions = load_sessions(path, format);
  c.vocab = build_vocab(c.sessions);
  c.labels = build_labels(c.sessions);
  index_sessions(c.sessions, c.vocab, c.labels);
  return c;
}

// Dev/test split indexed against frozen training vocab/labels.
inline std::vector<DialogueSession> load_eval_split(const std::string& path, TaskMode format,
                                                    const Vocab& vocab, const LabelSets& labels) {
  auto sessions = load_sessions(path, format);
  index_sessions(sessions, vocab, labels);
  return sessions;
}

// ---------------------------------------------------------------------------
// prediction record + history bundles
// ---------------------------------------------------------------------------

inline void record_prediction(DialogueSession& session, int turn_index, int intent_id,
                              const std::vector<int>& slot_ids) {
  if (turn_index < 0 || turn_index >= static_cast<int>(session.turns.size()))
    throw ContractError("record_prediction: turn " + std::to_string(turn_index) + " out of range");
  Turn& t = session.turns[static_cast<size_t>(turn_index)];
  if (static_cast<int>(slot_ids.size()) != t.n())
    throw ContractError("record_prediction: " + std::to_string(slot_ids.size()) + " slot ids for " +
                        std::to_string(t.n()) + " tokens");
  t.predicted_intent = intent_id;
  t.predicted_slots = slot_ids;
}

inline void clear_predictions(std::vector<DialogueSession>& sessions) {
  for (auto& s : sessions)
    for (auto& t : s.turns) {
      t.predicted_intent.reset();
      t.predicted_slots.reset();
    }
}

// Aligned id sequences for all turns before `turn_index`. The utterance side
// is [CLS, tokens...] per turn; the result side is [intent, slots...], so the
// intent sits at each turn's CLS position and both sides share one length.
struct HistoryBundle {
  std::vector<int> utt_ids;
  std::vector<int> res_ids;
  std::vector<uint8_t> res_is_intent;  // 1 at CLS-aligned positions

  bool empty() const { return utt_ids.empty(); }
  size_t length() const { return utt_ids.size(); }
};

inline HistoryBundle build_history(const DialogueSession& session, int turn_index, HistorySource source) {
  HistoryBundle h;
  for (int u = 0; u < turn_index; ++u) {
    const Turn& t = session.turns[static_cast<size_t>(u)];
    int intent;
    const std::vector<int>* slots;
    if (source == HistorySource::gold) {
      intent = t.intent_id;
      slots = &t.slot_ids;
    } else {
      if (!t.predicted_intent || !t.predicted_slots)
        throw ContractError("history requested for turn " + std::to_string(turn_index) + " of session '" +
                            session.id + "' but turn " + std::to_string(u) + " has no recorded prediction");
      intent = *t.predicted_intent;
      slots = &*t.predicted_slots;
    }
    h.utt_ids.push_back(kClsId);
    h.res_ids.push_back(intent);
    h.res_is_intent.push_back(1);
    for (size_t j = 0; j < t.token_ids.size(); ++j) {
      h.utt_ids.push_back(t.token_ids[j]);
      h.res_ids.push_back((*slots)[j]);
      h.res_is_intent.push_back(0);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

// One utterance per batch row, padded to the batch maxima. The history is
// per-example; rows from different sessions may share a batch.
struct Batch {
  // [B x (n_max+1)]: CLS at column 0, then tokens, then PAD fill
  std::vector<std::vector<int>> tokens;
  std::vector<std::vector<uint8_t>> mask;  // 1 on CLS + real tokens
  std::vector<int> gold_intent;
  std::vector<std::vector<int>> gold_slots;  // unpadded, length n per example
  // history, padded to the batch history max
  std::vector<std::vector<int>> hist_utt;
  std::vector<std::vector<int>> hist_res;
  std::vector<std::vector<uint8_t>> hist_is_intent;
  std::vector<std::vector<uint8_t>> hist_mask;

  size_t size() const { return tokens.size(); }
};

struct TurnRef {
  DialogueSession* session;
  int turn;
};

inline std::vector<TurnRef> flatten_turns(std::vector<DialogueSession>& sessions) {
  std::vector<TurnRef> refs;
  for (auto& s : sessions)
    for (int t = 0; t < static_cast<int>(s.turns.size()); ++t) refs.push_back({&s, t});
  return refs;
}

inline Batch make_batch(const std::vector<TurnRef>& refs, size_t begin, size_t end, HistorySource source) {
  Batch b;
  size_t n_max = 0, h_max = 0;
  std::vector<HistoryBundle> hists;
  for (size_t i = begin; i < end; ++i) {
    const Turn& t = refs[i].session->turns[static_cast<size_t>(refs[i].turn)];
    n_max = std::max(n_max, t.token_ids.size());
    hists.push_back(build_history(*refs[i].session, refs[i].turn, source));
    h_max = std::max(h_max, hists.back().length());
  }
  for (size_t i = begin; i < end; ++i) {
    const Turn& t = refs[i].session->turns[static_cast<size_t>(refs[i].turn)];
    std::vector<int> row{kClsId};
    std::vector<uint8_t> m{1};
    for (int id : t.token_ids) {
      row.push_back(id);
      m.push_back(1);
    }
    while (row.size() < n_max + 1) {
      row.push_back(kPadId);
      m.push_back(0);
    }
    b.tokens.push_back(std::move(row));
    b.mask.push_back(std::move(m));
    b.gold_intent.push_back(t.intent_id);
    b.gold_slots.push_back(t.slot_ids);

    HistoryBundle& h = hists[i - begin];
    std::vector<uint8_t> hm(h.length(), 1);
    while (h.utt_ids.size() < h_max) {
      h.utt_ids.push_back(kPadId);
      h.res_ids.push_back(0);
      h.res_is_intent.push_back(0);
      hm.push_back(0);
    }
    b.hist_utt.push_back(std::move(h.utt_ids));
    b.hist_res.push_back(std::move(h.res_ids));
    b.hist_is_intent.push_back(std::move(h.res_is_intent));
    b.hist_mask.push_back(std::move(hm));
  }
  return b;
}

// Seeded shuffle of single-turn units; each keeps its full preceding history.
// Pass shuffle_seed < 0 to keep corpus order (evaluation).
inline std::vector<Batch> make_batches(std::vector<DialogueSession>& sessions, int batch_size,
                                       int64_t shuffle_seed, HistorySource source) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  auto refs = flatten_turns(sessions);
  if (refs.empty()) throw ConfigError("empty corpus");
  if (shuffle_seed >= 0) {
    Rng rng(static_cast<uint64_t>(shuffle_seed));
    rng.shuffle(refs);
  }
  std::vector<Batch> out;
  for (size_t i = 0; i < refs.size(); i += static_cast<size_t>(batch_size))
    out.push_back(make_batch(refs, i, std::min(refs.size(), i + static_cast<size_t>(batch_size)), source));
  return out;
}

}  // namespace slu

#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slu/checkpoint.hpp"
#include "slu/config.hpp"
#include "slu/data.hpp"
#include "slu/metrics.hpp"
#include "slu/model.hpp"
#include "slu/optim.hpp"

#ifndef SLU_BUILD_ID
#define SLU_BUILD_ID "dev"
#endif

namespace slu {

inline void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory '" + path + "': " + ec.message());
}

inline void write_file_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write '" + tmp + "'");
    f << content;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

// ---------------------------------------------------------------------------
// evaluation driver
// ---------------------------------------------------------------------------

struct PredictionRow {
  std::string id;
  int turn = 0;
  std::string gold_intent, pred_intent;
  std::vector<std::string> gold_slots, pred_slots;
  double latency_ms = 0;
};

struct EvalOutput {
  EvalReport report;
  std::vector<PredictionRow> rows;
};

// Sessions are processed in turn order; each prediction is recorded before
// the next turn so its history sees the model's own outputs.
template <class S>
EvalOutput evaluate_model(const Model<S>& model, std::vector<DialogueSession>& sessions,
                          const LabelSets& labels) {
  clear_predictions(sessions);
  EvalOutput out;
  std::vector<int> gold_i, pred_i;
  std::vector<std::vector<int>> gold_s, pred_s;
  std::vector<std::vector<std::string>> gold_str, pred_str;
  struct BucketAcc {
    std::vector<int> gi, pi;
    std::vector<std::vector<std::string>> gs, ps;
  } buckets[3];
  std::vector<double> latencies;
  using clock = std::chrono::steady_clock;

  for (auto& session : sessions) {
    int n_turns = static_cast<int>(session.turns.size());
    for (int t = 0; t < n_turns; ++t) {
      ExampleView ex = ExampleView::from_turn(session, t, HistorySource::predicted);
      auto t0 = clock::now();
      Prediction pred = model.predict(ex);
      auto t1 = clock::now();
      record_prediction(session, t, pred.intent, pred.slots);
      double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      latencies.push_back(ms);

      const Turn& turn = session.turns[static_cast<size_t>(t)];
      gold_i.push_back(turn.intent_id);
      pred_i.push_back(pred.intent);
      gold_s.push_back(turn.slot_ids);
      pred_s.push_back(pred.slots);
      gold_str.push_back(ids_to_slot_strings(turn.slot_ids, labels));
      pred_str.push_back(ids_to_slot_strings(pred.slots, labels));

      BucketAcc& b = buckets[position_bucket(t, n_turns)];
      b.gi.push_back(turn.intent_id);
      b.pi.push_back(pred.intent);
      b.gs.push_back(gold_str.back());
      b.ps.push_back(pred_str.back());

      PredictionRow row;
      row.id = session.id;
      row.turn = t;
      row.gold_intent = labels.intents[static_cast<size_t>(turn.intent_id)];
      row.pred_intent = labels.intents[static_cast<size_t>(pred.intent)];
      row.gold_slots = gold_str.back();
      row.pred_slots = pred_str.back();
      row.latency_ms = ms;
      out.rows.push_back(std::move(row));
    }
  }

  EvalReport& r = out.report;
  r.intent_accuracy = intent_accuracy(gold_i, pred_i);
  PrF1 f1 = slot_f1(gold_str, pred_str);
  r.slot_precision = f1.precision;
  r.slot_recall = f1.recall;
  r.slot_f1 = f1.f1;
  r.overall_accuracy = overall_accuracy(gold_i, pred_i, gold_s, pred_s);
  UncReport unc = uncoordinated_analysis(gold_str, pred_str);
  r.slot_error_count = unc.slot_errors;
  r.unc_errors = unc.unc;
  r.bi_errors = unc.bi;
  r.ib_errors = unc.ib;
  PositionBucket* outb[3] = {&r.early, &r.medium, &r.late};
  for (int i = 0; i < 3; ++i) {
    BucketAcc& b = buckets[i];
    outb[i]->count = static_cast<int64_t>(b.gi.size());
    if (!b.gi.empty()) {
      outb[i]->intent_acc = intent_accuracy(b.gi, b.pi);
      outb[i]->slot_f1 = slot_f1(b.gs, b.ps).f1;
    }
  }
  r.latency = summarize_latencies(std::move(latencies));
  r.n_utterances = static_cast<int64_t>(gold_i.size());
  return out;
}

inline void write_predictions_jsonl(const std::string& path, const std::vector<PredictionRow>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write predictions '" + path + "'");
  for (const auto& r : rows) {
    nlohmann::json j;
    j["id"] = r.id;
    j["turn"] = r.turn;
    j["gold_intent"] = r.gold_intent;
    j["pred_intent"] = r.pred_intent;
    j["gold_slots"] = r.gold_slots;
    j["pred_slots"] = r.pred_slots;
    j["latency_ms"] = r.latency_ms;
    f << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double val_intent = -1, val_f1 = -1, val_overall = -1;
};

struct RunArtifacts {
  std::string checkpoint_path, manifest_path, report_path, predictions_path;
  int best_epoch = -1;
  double best_val_overall = -1;
  EvalReport final_report;
  std::vector<EpochLog> log;
  // set when an early-exit target was requested and reached
  int reached_target_epoch = -1;
};

struct TrainOptions {
  // stop as soon as validation overall accuracy reaches this value (<0: off)
  double stop_at_val_overall = -1.0;
  bool quiet = false;
};

template <class S>
OptimizerState<S> make_optimizer(const RunConfig& cfg) {
  OptimizerState<S> st;
  st.kind = cfg.optimizer == "adam" ? OptimizerKind::adam : OptimizerKind::adamw;
  st.learning_rate = cfg.learning_rate;
  st.weight_decay = cfg.optimizer == "adam" ? 0.0 : cfg.weight_decay;
  st.grad_clip = cfg.grad_clip;
  return st;
}

template <class S>
RunArtifacts run_training(const RunConfig& cfg_in, std::ostream* info = &std::cerr,
                          TrainOptions opts = {}) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  if (cfg.train_path.empty()) throw ConfigError("train_path not set");
  ensure_dir(cfg.output_dir);

  Corpus corpus = load_corpus(cfg.train_path, cfg.mode);
  std::vector<DialogueSession> valid, test;
  if (!cfg.valid_path.empty()) valid = load_eval_split(cfg.valid_path, cfg.mode, corpus.vocab, corpus.labels);
  if (!cfg.test_path.empty()) test = load_eval_split(cfg.test_path, cfg.mode, corpus.vocab, corpus.labels);

  Rng rng(cfg.seed);
  Model<S> model(cfg, corpus.vocab.size(), corpus.labels.n_intents(), corpus.labels.n_slots(),
                 /*with_decoder=*/true, rng);
  auto params = model.parameters();
  OptimizerState<S> opt = make_optimizer<S>(cfg);

  RunArtifacts art;
  art.checkpoint_path = cfg.output_dir + "/best.ckpt";
  art.manifest_path = cfg.output_dir + "/manifest.json";
  art.report_path = cfg.output_dir + "/report.json";
  art.predictions_path = cfg.output_dir + "/predictions.jsonl";

  int64_t step = 0;
  bool saved_any = false;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.history_source == HistorySource::predicted) {
      // history from the model's own outputs: record a fresh prediction pass
      // over the training sessions before batching
      clear_predictions(corpus.sessions);
      for (auto& session : corpus.sessions)
        for (int t = 0; t < static_cast<int>(session.turns.size()); ++t) {
          ExampleView ex = ExampleView::from_turn(session, t, HistorySource::predicted);
          Prediction p = model.predict(ex);
          record_prediction(session, t, p.intent, p.slots);
        }
    }
    int64_t shuffle_seed = static_cast<int64_t>(rng.next_u64() >> 1);
    auto batches = make_batches(corpus.sessions, cfg.batch_size, shuffle_seed, cfg.history_source);
    double loss_sum = 0;
    for (auto& batch : batches) {
      ++step;
      zero_grads(params);
      Tape<S> tape;
      auto losses = joint_batch_loss(model, batch, /*training=*/true, &rng);
      double lv = static_cast<double>(losses.total.item());
      if (!std::isfinite(lv)) throw NumericalError("non-finite loss at step " + std::to_string(step));
      tape.backward(losses.total);
      fill_missing_grads(params);
      optimizer_step(params, opt);
      loss_sum += lv;
    }
    EpochLog el;
    el.epoch = epoch;
    el.train_loss = batches.empty() ? 0 : loss_sum / static_cast<double>(batches.size());

    if (!valid.empty()) {
      EvalOutput vo = evaluate_model(model, valid, corpus.labels);
      el.val_intent = vo.report.intent_accuracy;
      el.val_f1 = vo.report.slot_f1;
      el.val_overall = vo.report.overall_accuracy;
      if (el.val_overall > art.best_val_overall) {
        art.best_val_overall = el.val_overall;
        art.best_epoch = epoch;
        ckpt::save(art.checkpoint_path, model, corpus.vocab, corpus.labels);
        saved_any = true;
      }
    }
    art.log.push_back(el);
    if (info && !opts.quiet)
      (*info) << "epoch " << epoch << " loss " << el.train_loss
              << (el.val_overall >= 0 ? " val_overall " + std::to_string(el.val_overall) : "") << "\n";
    if (opts.stop_at_val_overall >= 0 && el.val_overall >= opts.stop_at_val_overall) {
      art.reached_target_epoch = epoch;
      break;
    }
  }

  if (!saved_any) {
    ckpt::save(art.checkpoint_path, model, corpus.vocab, corpus.labels);
    art.best_epoch = cfg.epochs;
  } else if (art.best_epoch >= 0 && art.reached_target_epoch < 0 && !valid.empty()) {
    // final metrics come from the best-validation weights
    ckpt::load_into(ckpt::read_payload(art.checkpoint_path), model, /*lenient=*/false);
  }

  std::vector<DialogueSession>* final_split = !test.empty() ? &test : (!valid.empty() ? &valid : &corpus.sessions);
  EvalOutput final_out = evaluate_model(model, *final_split, corpus.labels);
  art.final_report = final_out.report;
  write_file_atomic(art.report_path, final_out.report.to_json().dump(2) + "\n");
  write_predictions_jsonl(art.predictions_path, final_out.rows);

  nlohmann::json manifest;
  manifest["build_id"] = SLU_BUILD_ID;
  manifest["seed"] = cfg.seed;
  manifest["config_text"] = serialize_config(cfg);
  manifest["checkpoint"] = art.checkpoint_path;
  manifest["report"] = art.report_path;
  manifest["predictions"] = art.predictions_path;
  manifest["best_epoch"] = art.best_epoch;
  manifest["best_val_overall"] = art.best_val_overall;
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : art.log) {
    log.push_back({{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"val_intent", e.val_intent},
                   {"val_f1", e.val_f1},
                   {"val_overall", e.val_overall}});
  }
  manifest["epoch_log"] = log;
  write_file_atomic(art.manifest_path, manifest.dump(2) + "\n");
  return art;
}

// Mean and sample standard deviation over repeated runs (seed, seed+1, ...).
struct RepeatSummary {
  double intent_mean = 0, intent_std = 0;
  double f1_mean = 0, f1_std = 0;
  double overall_mean = 0, overall_std = 0;
  std::vector<RunArtifacts> runs;
};

template <class S>
RepeatSummary run_repeats(const RunConfig& cfg, std::ostream* info = &std::cerr) {
  RepeatSummary sum;
  std::vector<double> is, fs, os_;
  for (int r = 0; r < cfg.repeats; ++r) {
    RunConfig c = cfg;
    c.seed = cfg.seed + static_cast<uint64_t>(r);
    if (cfg.repeats > 1) c.output_dir = cfg.output_dir + "/run" + std::to_string(r);
    sum.runs.push_back(run_training<S>(c, info));
    const EvalReport& rep = sum.runs.back().final_report;
    is.push_back(rep.intent_accuracy);
    fs.push_back(rep.slot_f1);
    os_.push_back(rep.overall_accuracy);
  }
  auto mean_std = [](const std::vector<double>& v, double& m, double& s) {
    m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    s = 0;
    if (v.size() > 1) {
      for (double x : v) s += (x - m) * (x - m);
      s = std::sqrt(s / static_cast<double>(v.size() - 1));
    }
  };
  mean_std(is, sum.intent_mean, sum.intent_std);
  mean_std(fs, sum.f1_mean, sum.f1_std);
  mean_std(os_, sum.overall_mean, sum.overall_std);
  return sum;
}

}  // namespace slu

// Acceptance suite. Each criterion prints one [PASS]/[FAIL] line with the
// measured quantity; the process exit code is the number of failures.
//
// Usage: acceptance [--cli /path/to/slu]
// The CLI path enables the end-to-end determinism criterion to run through
// the real binary; without it the library-level trainer is used instead.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "slu/checkpoint.hpp"
#include "slu/metrics.hpp"
#include "slu/model.hpp"
#include "slu/train.hpp"

using namespace slu;
using clock_type = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what) {
  printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
  fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    char tmpl[] = "/tmp/slu_accept_XXXXXX";
    path = mkdtemp(tmpl);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Small in-memory trainer for the model-property criteria.
template <class S>
void train_inmemory(Model<S>& model, std::vector<DialogueSession>& sessions, const RunConfig& cfg,
                    int epochs, Rng& rng) {
  auto params = model.parameters();
  OptimizerState<S> opt = make_optimizer<S>(cfg);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    int64_t shuffle_seed = static_cast<int64_t>(rng.next_u64() >> 1);
    auto batches = make_batches(sessions, cfg.batch_size, shuffle_seed, cfg.history_source);
    for (auto& batch : batches) {
      zero_grads(params);
      Tape<S> tape;
      auto losses = joint_batch_loss(model, batch, true, &rng);
      if (!std::isfinite(static_cast<double>(losses.total.item())))
        throw NumericalError("non-finite loss");
      tape.backward(losses.total);
      fill_missing_grads(params);
      optimizer_step(params, opt);
    }
  }
}

// Mean per-call milliseconds of two callables, interleaved to cancel drift.
template <class FA, class FB>
std::pair<double, double> interleaved_mean_ms(FA&& fa, FB&& fb, int iters, int warmup) {
  for (int i = 0; i < warmup; ++i) {
    fa();
    fb();
  }
  double ta = 0, tb = 0;
  for (int i = 0; i < iters; ++i) {
    auto t0 = clock_type::now();
    fa();
    auto t1 = clock_type::now();
    fb();
    auto t2 = clock_type::now();
    ta += std::chrono::duration<double, std::milli>(t1 - t0).count();
    tb += std::chrono::duration<double, std::milli>(t2 - t1).count();
  }
  return {ta / iters, tb / iters};
}

// ---------------------------------------------------------------------------
// criterion 1: gradient integrity on the tiny joint model
// ---------------------------------------------------------------------------
void criterion_1() {
  auto t0 = clock_type::now();
  RunConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.d_ff = 32;
  cfg.sha_layers = 1;
  cfg.encoder_layers = 2;
  cfg.decoder_layers = 1;
  cfg.rel_pos_clip = 3;
  cfg.dropout = 0.0;
  cfg.lrm_positions = {1};
  cfg.lambda = 0.75;
  cfg.alpha = 0.35;
  // finite differences see the total derivative, so the consistency target
  // must not be detached while checking
  cfg.slg_consistency_both = true;

  const int d_i = 3, d_s = 5, vocab = 9;
  Rng rng(2024);
  Model<double> model(cfg, vocab, d_i, d_s, true, rng);
  auto params = model.parameters();

  // n = 4 with one 3-token history turn
  ExampleView ex;
  ex.tokens = {kClsId, 3, 4, 5, 6};
  ex.mask = {1, 1, 1, 1, 1};
  ex.n = 4;
  ex.gold_intent = 1;
  ex.gold_slots = {0, 2, 3, 1};
  ex.hist_utt = {kClsId, 7, 8, 3};
  ex.hist_res = {2, 1, 4, 0};
  ex.hist_is_intent = {1, 0, 0, 0};
  ex.hist_mask = {1, 1, 1, 1};

  auto loss_fn = [&] {
    auto out = model.forward(ex, false, nullptr);
    auto slu = slu_loss(out.intent_dist, out.slot_dist, ex.gold_intent, ex.gold_slots);
    auto gen = model.slg->forward(out.enc_states, &ex.mask, model.slg->shift_right(ex.gold_slots),
                                  ex.n, false, nullptr);
    auto slg = slg_loss(gen, ex.gold_slots, out.slot_dist, cfg.alpha, cfg.slg_consistency_both);
    return ops::add(slu, ops::scale(slg, cfg.lambda));
  };
  auto rep = testutil::fd_check(params, loss_fn, 1e-5);
  double secs = seconds_since(t0);
  bool pass = rep.max_rel_err <= 1e-4 && secs < 60.0;
  report(1, pass,
         "joint-loss gradient vs central differences: max rel err " + fmt(rep.max_rel_err) + " over " +
             std::to_string(rep.checked) + " parameters (worst " + rep.worst_param + "), " + fmt(secs) + "s");
}

// ---------------------------------------------------------------------------
// criterion 2: history alignment invariant on 500 random dialogues
// ---------------------------------------------------------------------------
void criterion_2() {
  Rng rng(4242);
  auto sessions = testutil::random_sessions(rng, 500, 6, 9);
  Vocab v = build_vocab(sessions);
  LabelSets l = build_labels(sessions);
  index_sessions(sessions, v, l);
  int64_t bundles = 0;
  bool ok = true;
  for (auto& s : sessions)
    for (int t = 0; t < static_cast<int>(s.turns.size()); ++t) {
      HistoryBundle h = build_history(s, t, HistorySource::gold);
      ++bundles;
      ok = ok && h.utt_ids.size() == h.res_ids.size();
      for (size_t i = 0; i < h.utt_ids.size() && ok; ++i)
        ok = ok && ((h.utt_ids[i] == kClsId) == (h.res_is_intent[i] == 1));
    }
  report(2, ok,
         "utterance/result alignment with intent-at-CLS pairing held for " + std::to_string(bundles) +
             " history bundles over 500 dialogues");
}

// ---------------------------------------------------------------------------
// criterion 3: overfit sanity, deterministic per seed
// ---------------------------------------------------------------------------
void criterion_3() {
  auto t0 = clock_type::now();
  TempDir tmp;
  Rng gen(31337);
  auto sessions = testutil::deterministic_dialogues(gen, 15, 3, 16, 3, 8);  // +1 closure dialogue = 16
  save_sessions(tmp.file("train.jsonl"), sessions);

  RunConfig cfg;
  cfg.d_model = 64;
  cfg.heads = 4;
  cfg.d_ff = 128;
  cfg.sha_layers = 1;
  cfg.encoder_layers = 2;
  cfg.decoder_layers = 1;
  cfg.rel_pos_clip = 8;
  cfg.dropout = 0.0;
  cfg.lrm_positions = {1};
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 16;
  cfg.epochs = 300;
  cfg.seed = 7;
  cfg.train_path = tmp.file("train.jsonl");
  cfg.valid_path = tmp.file("train.jsonl");  // overfit target is the training set

  TrainOptions opts;
  opts.stop_at_val_overall = 1.0;
  opts.quiet = true;
  std::ostringstream sink;

  RunConfig a = cfg;
  a.output_dir = tmp.file("a");
  auto ra = run_training<double>(a, &sink, opts);
  RunConfig b = cfg;
  b.output_dir = tmp.file("b");
  auto rb = run_training<double>(b, &sink, opts);

  double secs = seconds_since(t0);
  bool reached = ra.reached_target_epoch > 0 && ra.reached_target_epoch <= 300 &&
                 ra.final_report.overall_accuracy == 1.0;
  bool deterministic = ra.reached_target_epoch == rb.reached_target_epoch &&
                       slurp(ra.checkpoint_path) == slurp(rb.checkpoint_path);
  bool pass = reached && deterministic && secs < 300.0;
  report(3, pass,
         "16-dialogue overfit: overall " + fmt(ra.final_report.overall_accuracy) + " at epoch " +
             std::to_string(ra.reached_target_epoch) + " (twice, bit-identical: " +
             (deterministic ? "yes" : "no") + "), " + fmt(secs) + "s");
}

// ---------------------------------------------------------------------------
// criterion 4: history ablation direction on a history-only corpus
// ---------------------------------------------------------------------------
void criterion_4() {
  auto sessions_master = testutil::history_only_dialogues(8, 3);

  RunConfig base;
  base.d_model = 32;
  base.heads = 4;
  base.d_ff = 64;
  base.sha_layers = 1;
  base.encoder_layers = 2;
  base.decoder_layers = 1;
  base.rel_pos_clip = 4;
  base.dropout = 0.0;
  base.lrm_positions = {1};
  base.learning_rate = 1e-3;
  base.batch_size = 12;
  base.seed = 3;

  auto turn2_f1 = [&](ShaAblation ablation) {
    auto sessions = sessions_master;
    Vocab v = build_vocab(sessions);
    LabelSets l = build_labels(sessions);
    index_sessions(sessions, v, l);
    RunConfig cfg = base;
    cfg.sha_ablation = ablation;
    Rng rng(cfg.seed);
    Model<double> model(cfg, v.size(), l.n_intents(), l.n_slots(), true, rng);
    train_inmemory(model, sessions, cfg, 60, rng);

    // evaluation in turn order with recorded predictions as history
    clear_predictions(sessions);
    std::vector<std::vector<std::string>> gold2, pred2;
    for (auto& s : sessions)
      for (int t = 0; t < static_cast<int>(s.turns.size()); ++t) {
        ExampleView ex = ExampleView::from_turn(s, t, HistorySource::predicted);
        Prediction p = model.predict(ex);
        record_prediction(s, t, p.intent, p.slots);
        if (t == 1) {
          gold2.push_back(ids_to_slot_strings(s.turns[1].slot_ids, l));
          pred2.push_back(ids_to_slot_strings(p.slots, l));
        }
      }
    return slot_f1(gold2, pred2).f1;
  };

  double with_history = turn2_f1(ShaAblation::full);
  double without_history = turn2_f1(ShaAblation::off);
  double gap = 100.0 * (with_history - without_history);
  bool pass = gap >= 20.0;
  report(4, pass,
         "turn-2 slot F1 " + fmt(100.0 * with_history) + " with history vs " + fmt(100.0 * without_history) +
             " without; gap " + fmt(gap) + " points (need >= 20)");
}

// ---------------------------------------------------------------------------
// criterion 5: metric oracles
// ---------------------------------------------------------------------------
void criterion_5() {
  // brute force on 1000 random pairs, exact agreement
  Rng rng(515);
  bool exact = true;
  std::vector<std::vector<std::string>> gold, pred;
  for (int i = 0; i < 1000; ++i) {
    int len = 1 + static_cast<int>(rng.below(12));
    gold.push_back(testutil::random_iob(rng, len, 3));
    pred.push_back(testutil::random_iob(rng, len, 3));
    auto fast = extract_chunks(gold.back());
    auto slow = testutil::brute_force_chunks(gold.back());
    exact = exact && fast.size() == slow.size();
    for (const auto& c : fast) exact = exact && slow.count({c.type, c.start, c.end}) == 1;
  }
  auto mine = slot_f1(gold, pred);
  auto [bp, br, bf] = testutil::brute_force_f1(gold, pred);
  exact = exact && mine.precision == bp && mine.recall == br && mine.f1 == bf;

  // the two-chunk uncoordinated fixture
  UncReport unc = uncoordinated_analysis({{"O", "B-city", "I-city", "O", "B-time", "I-time"}},
                                         {{"O", "B-city", "I-time", "O", "B-city", "I-time"}});
  bool fixture_ok = unc.bi == 1 && unc.ib == 1 && unc.unc == 2;

  auto chunks = extract_chunks({"O", "O", "O", "B-distance", "B-poi_type", "I-poi_type", "O"});
  bool chunk_ok = chunks.size() == 2 && chunks[0] == Chunk{"distance", 3, 3} &&
                  chunks[1] == Chunk{"poi_type", 4, 5};

  report(5, exact && fixture_ok && chunk_ok,
         std::string("chunk F1 matches brute force on 1000 pairs (") + (exact ? "exact" : "MISMATCH") +
             "); BI/IB fixture -> bi=" + std::to_string(unc.bi) + " ib=" + std::to_string(unc.ib) +
             " unc=" + std::to_string(unc.unc) + "; span fixture " + (chunk_ok ? "ok" : "WRONG"));
}

// A small trained-shape model pair for the latency criteria.
struct LatencyRig {
  Vocab vocab;
  LabelSets labels;
  std::vector<DialogueSession> sessions;
  RunConfig cfg;

  LatencyRig(int d_model, int m_layers, int n_tokens) {
    Rng gen(99);
    sessions = testutil::deterministic_dialogues(gen, 6, 2, n_tokens, 3, 6);
    vocab = build_vocab(sessions);
    labels = build_labels(sessions);
    index_sessions(sessions, vocab, labels);
    cfg.d_model = d_model;
    cfg.heads = 4;
    cfg.sha_layers = 1;
    cfg.encoder_layers = m_layers;
    cfg.decoder_layers = m_layers;
    cfg.rel_pos_clip = 8;
    cfg.dropout = 0.0;
    cfg.lrm_positions = {std::max(1, m_layers / 2)};
  }

  ExampleView example() { return ExampleView::from_turn(sessions[0], 0, HistorySource::gold); }
};

// ---------------------------------------------------------------------------
// criterion 6: the generation decoder costs no inference time
// ---------------------------------------------------------------------------
void criterion_6() {
  LatencyRig rig(64, 3, 10);
  TempDir tmp;
  Rng r1(5);
  Model<double> trainer(rig.cfg, rig.vocab.size(), rig.labels.n_intents(), rig.labels.n_slots(), true, r1);
  ckpt::save(tmp.file("full.ckpt"), trainer, rig.vocab, rig.labels);
  ckpt::strip_prefix(tmp.file("full.ckpt"), tmp.file("stripped.ckpt"), "slg.");

  // with decoder weights present (trainer-shaped model)
  Rng r2(5);
  Model<double> with_dec(rig.cfg, rig.vocab.size(), rig.labels.n_intents(), rig.labels.n_slots(), true, r2);
  ckpt::load_into(ckpt::read_payload(tmp.file("full.ckpt")), with_dec, false);
  // with decoder weights deleted
  Rng r3(5);
  Model<double> without_dec(rig.cfg, rig.vocab.size(), rig.labels.n_intents(), rig.labels.n_slots(), false, r3);
  ckpt::load_into(ckpt::read_payload(tmp.file("stripped.ckpt")), without_dec, false);

  ExampleView ex = rig.example();
  Prediction pa = with_dec.predict(ex);
  Prediction pb = without_dec.predict(ex);
  bool same_outputs = pa.intent == pb.intent && pa.slots == pb.slots;

  auto [ma, mb] = interleaved_mean_ms([&] { with_dec.predict(ex); }, [&] { without_dec.predict(ex); },
                                      1000, 25);
  double rel = std::fabs(ma - mb) / std::min(ma, mb);
  bool pass = same_outputs && rel < 0.02;
  report(6, pass,
         "predict mean " + fmt(ma) + "ms with decoder weights vs " + fmt(mb) +
             "ms without over 1000 runs each; diff " + fmt(100 * rel) + "% (need < 2%), outputs " +
             (same_outputs ? "identical" : "DIFFER"));
}

// ---------------------------------------------------------------------------
// criterion 7: refinement overhead at d_model=128, M=6
// ---------------------------------------------------------------------------
void criterion_7() {
  LatencyRig rig(128, 6, 10);
  rig.cfg.lrm_positions = {2};
  TempDir tmp;
  Rng r1(5);
  Model<double> on(rig.cfg, rig.vocab.size(), rig.labels.n_intents(), rig.labels.n_slots(), false, r1);
  RunConfig off_cfg = rig.cfg;
  off_cfg.lrm_enabled = false;
  ckpt::save(tmp.file("m.ckpt"), on, rig.vocab, rig.labels);
  Rng r2(6);
  Model<double> off(off_cfg, rig.vocab.size(), rig.labels.n_intents(), rig.labels.n_slots(), false, r2);
  ckpt::load_into(ckpt::read_payload(tmp.file("m.ckpt")), off, /*lenient=*/true);

  ExampleView ex = rig.example();
  auto [m_on, m_off] = interleaved_mean_ms([&] { on.predict(ex); }, [&] { off.predict(ex); }, 60, 6);
  double overhead = m_on / m_off - 1.0;
  bool pass = overhead <= 0.10;
  report(7, pass,
         "refinement on " + fmt(m_on) + "ms vs off " + fmt(m_off) + "ms at d_model=128, M=6; overhead " +
             fmt(100 * overhead) + "% (need <= 10%)");
}

// ---------------------------------------------------------------------------
// criterion 8: parallel tagging vs token-serial decoding at length 32
// ---------------------------------------------------------------------------
void criterion_8() {
  RunConfig cfg;
  cfg.d_model = 64;
  cfg.heads = 4;
  cfg.sha_layers = 1;
  cfg.encoder_layers = 3;
  cfg.decoder_layers = 3;
  cfg.rel_pos_clip = 8;
  cfg.dropout = 0.0;
  cfg.lrm_positions = {1};
  cfg.sha_ablation = ShaAblation::off;
  cfg.mode = TaskMode::single_turn;

  const int n = 32;
  Rng rng(8);
  Model<double> model(cfg, 40, 3, 6, true, rng);
  ExampleView ex;
  ex.tokens.push_back(kClsId);
  for (int i = 0; i < n; ++i) ex.tokens.push_back(3 + static_cast<int>(rng.below(30)));
  ex.mask.assign(static_cast<size_t>(n + 1), 1);
  ex.n = n;
  for (int i = 0; i < n; ++i) ex.gold_slots.push_back(static_cast<int>(rng.below(6)));
  ex.gold_intent = 0;

  auto tagger = [&] { model.predict(ex); };
  auto serial = [&] {
    auto out = model.forward(ex, false, nullptr);
    model.slg->greedy_decode(out.enc_states, &ex.mask, n);
  };
  auto [m_tag, m_ar] = interleaved_mean_ms(tagger, serial, 30, 3);
  double speedup = m_ar / m_tag;
  bool pass = speedup >= 3.0;
  report(8, pass,
         "token-serial decode " + fmt(m_ar) + "ms vs parallel tagger " + fmt(m_tag) + "ms at length 32; " +
             fmt(speedup) + "x slower (need >= 3x)");
}

// ---------------------------------------------------------------------------
// criterion 9: decoder causality over 200 random cases
// ---------------------------------------------------------------------------
void criterion_9() {
  RunConfig cfg = testutil::tiny_config(16, 2, 1, 2, 2);
  const int d_s = 6;
  Rng rng(909);
  SlgDecoder<double> dec(cfg, d_s, rng);
  bool ok = true;
  int cases = 0;
  for (int trial = 0; trial < 200 && ok; ++trial) {
    int n = 1 + static_cast<int>(rng.below(9));
    Tensor<double> enc = Tensor<double>::zeros({n + 1, 16});
    for (Index i = 0; i < enc.numel(); ++i) enc.data()[i] = rng.normal(0.0, 1.0);
    std::vector<uint8_t> mask(static_cast<size_t>(n + 1), 1);
    std::vector<int> gold;
    for (int i = 0; i < n; ++i) gold.push_back(static_cast<int>(rng.below(d_s)));
    auto base = dec.forward(enc, &mask, dec.shift_right(gold), n, false, nullptr);
    int j = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    std::vector<int> perturbed = gold;
    perturbed[static_cast<size_t>(j)] =
        (gold[static_cast<size_t>(j)] + 1 + static_cast<int>(rng.below(d_s - 1))) % d_s;
    auto out = dec.forward(enc, &mask, dec.shift_right(perturbed), n, false, nullptr);
    for (int p = 0; p <= j && ok; ++p)
      for (Index c = 0; c < out.cols() && ok; ++c) ok = out(p, c) == base(p, c);
    ++cases;
  }
  report(9, ok, "perturbing gold label j never changed positions <= j in " + std::to_string(cases) +
                    " random cases (bitwise)");
}

// ---------------------------------------------------------------------------
// criterion 10: determinism through the CLI
// ---------------------------------------------------------------------------
void criterion_10(const std::string& cli) {
  TempDir tmp;
  Rng gen(1);
  auto sessions = testutil::deterministic_dialogues(gen, 8, 3, 9, 3, 3);
  save_sessions(tmp.file("train.jsonl"), sessions);
  std::string cfg_text =
      "mode = multi_turn\n"
      "d_model = 16\nheads = 2\nd_ff = 32\nsha_layers = 1\nencoder_layers = 2\ndecoder_layers = 1\n"
      "rel_pos_clip = 4\ndropout = 0.1\nlrm_positions = 1\n"
      "seed = 12\nepochs = 3\nbatch_size = 8\nlearning_rate = 1e-3\n"
      "train_path = " + tmp.file("train.jsonl") + "\n" +
      "valid_path = " + tmp.file("train.jsonl") + "\n" +
      "output_dir = " + tmp.file("out") + "\n";
  {
    std::ofstream f(tmp.file("run.cfg"));
    f << cfg_text;
  }

  bool pass = false;
  std::string how;
  if (!cli.empty()) {
    std::string cmd = "\"" + cli + "\" train --config \"" + tmp.file("run.cfg") + "\" > /dev/null 2>&1";
    int rc1 = std::system(cmd.c_str());
    std::string first = slurp(tmp.file("out") + "/best.ckpt");
    std::string manifest1 = slurp(tmp.file("out") + "/manifest.json");
    int rc2 = std::system(cmd.c_str());
    std::string second = slurp(tmp.file("out") + "/best.ckpt");
    std::string manifest2 = slurp(tmp.file("out") + "/manifest.json");
    pass = rc1 == 0 && rc2 == 0 && !first.empty() && first == second && manifest1 == manifest2;
    how = "two `train` runs of the same manifest through the CLI binary";
  } else {
    RunConfig cfg = parse_config_text(cfg_text, RunConfig{});
    std::ostringstream sink;
    auto r1 = run_training<double>(cfg, &sink);
    std::string first = slurp(r1.checkpoint_path);
    auto r2 = run_training<double>(cfg, &sink);
    pass = !first.empty() && first == slurp(r2.checkpoint_path);
    how = "two library-level training runs (no --cli given)";
  }
  report(10, pass, how + " produced bit-identical checkpoints: " + (pass ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// criterion 11: config fidelity
// ---------------------------------------------------------------------------
void criterion_11() {
  RunConfig multi = RunConfig::default_multi_turn();
  RunConfig single = RunConfig::default_single_turn();
  bool pass = multi.d_model == 768 && multi.sha_layers == 3 && multi.encoder_layers == 6 &&
              multi.heads == 8 && multi.dropout == 0.3 && multi.lrm_positions == std::vector<int>{2} &&
              multi.alpha == 0.35 && multi.lambda == 0.75 && multi.learning_rate == 5e-5 &&
              multi.batch_size == 32 && multi.optimizer == "adamw" && single.d_model == 128 &&
              single.learning_rate == 1e-3 && single.optimizer == "adam";
  report(11, pass,
         "defaults echo the reference setups: multi(d_model=768, N=3, M=6, heads=8, dropout=0.3, k=2, "
         "alpha=0.35, lambda=0.75, lr=5e-5, batch=32, adamw), single(d_model=128, lr=1e-3, adam)");
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--cli") cli = argv[i + 1];

  auto t0 = clock_type::now();
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10(cli);
  criterion_11();
  printf("%d/11 criteria passed in %.1fs\n", 11 - g_failures, seconds_since(t0));
  return g_failures;
}

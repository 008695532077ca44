// Command-line surface: train, eval, predict, bench, sweep, convert.
//
// Exit codes: 0 ok, 2 config, 3 I/O or corpus, 4 schema mismatch,
// 5 numerical failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slu/checkpoint.hpp"
#include "slu/config.hpp"
#include "slu/data.hpp"
#include "slu/metrics.hpp"
#include "slu/model.hpp"
#include "slu/train.hpp"

namespace {

using namespace slu;

std::string detect_mode_value(const std::string& path) {
  // First pass over the file only to find the task mode, so profile
  // defaults (multi-turn vs single-turn) can be chosen before applying it.
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  std::string mode;
  while (std::getline(f, line)) {
    std::string s = detail::trim(line);
    if (s.rfind("mode", 0) == 0) {
      size_t eq = s.find('=');
      if (eq != std::string::npos) mode = detail::trim(s.substr(eq + 1));
    }
  }
  return mode;
}

RunConfig load_config_with_profile(const std::string& path) {
  RunConfig base = RunConfig::default_multi_turn();
  if (!path.empty() && detect_mode_value(path) == "single_turn") base = RunConfig::default_single_turn();
  if (path.empty()) return base;
  return load_config_file(path, base);
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_config_key(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
}

struct LoadedModel {
  RunConfig cfg;
  Vocab vocab;
  LabelSets labels;
  std::unique_ptr<Model<double>> model;
};

LoadedModel load_for_inference(const std::string& ckpt_path, bool lrm_override = true,
                               bool lrm_enabled = true, ShaVariant* variant = nullptr) {
  ckpt::Payload p = ckpt::read_payload(ckpt_path);
  LoadedModel lm;
  lm.cfg = p.config;
  if (!lrm_override) lm.cfg.lrm_enabled = lrm_enabled;
  if (variant) lm.cfg.sha_variant = *variant;
  lm.vocab = p.vocab;
  lm.labels = p.labels;
  Rng rng(lm.cfg.seed);
  lm.model = std::make_unique<Model<double>>(lm.cfg, lm.vocab.size(), lm.labels.n_intents(),
                                             lm.labels.n_slots(), /*with_decoder=*/false, rng);
  ckpt::load_into(p, *lm.model, /*lenient=*/true);
  return lm;
}

// Flattened (session, turn) predictor that records its own outputs so later
// turns see predicted history. Used by bench and predict.
struct TurnPredictor {
  Model<double>* model;
  std::vector<DialogueSession>* sessions;
  std::vector<TurnRef> refs;

  explicit TurnPredictor(Model<double>& m, std::vector<DialogueSession>& s) : model(&m), sessions(&s) {
    clear_predictions(*sessions);
    refs = flatten_turns(*sessions);
  }

  Prediction predict_and_record(size_t i) {
    const TurnRef& r = refs[i % refs.size()];
    ExampleView ex = ExampleView::from_turn(*r.session, r.turn, HistorySource::predicted);
    Prediction p = model->predict(ex);
    record_prediction(*r.session, r.turn, p.intent, p.slots);
    return p;
  }
};

nlohmann::json bench_one(Model<double>& model, std::vector<DialogueSession>& sessions, int reps, int warmup) {
  TurnPredictor tp(model, sessions);
  LatencyStats st = bench_latency([&](size_t i) { tp.predict_and_record(i); }, tp.refs.size(), reps, warmup);
  return {{"mean_ms", st.mean_ms}, {"p50_ms", st.p50_ms}, {"p95_ms", st.p95_ms}, {"count", st.count}};
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets) {
  RunConfig cfg = load_config_with_profile(config_path);
  apply_overrides(cfg, sets);
  if (const char* env = std::getenv("SLU_OUTPUT_DIR"); env && cfg.output_dir == "runs") cfg.output_dir = env;
  cfg.validate();
  if (cfg.repeats > 1) {
    RepeatSummary sum = cfg.precision == Precision::f32 ? run_repeats<float>(cfg) : run_repeats<double>(cfg);
    std::cout << "repeats " << cfg.repeats << "\n"
              << "intent  " << sum.intent_mean << " +- " << sum.intent_std << "\n"
              << "slot_f1 " << sum.f1_mean << " +- " << sum.f1_std << "\n"
              << "overall " << sum.overall_mean << " +- " << sum.overall_std << "\n";
    return 0;
  }
  RunArtifacts art = cfg.precision == Precision::f32 ? run_training<float>(cfg) : run_training<double>(cfg);
  std::cout << "checkpoint " << art.checkpoint_path << "\n"
            << "manifest   " << art.manifest_path << "\n"
            << "report     " << art.report_path << "\n"
            << "intent " << art.final_report.intent_accuracy << " slot_f1 " << art.final_report.slot_f1
            << " overall " << art.final_report.overall_accuracy << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_path, const std::string& split,
             const std::string& out_dir) {
  LoadedModel lm = load_for_inference(ckpt_path);
  auto sessions = load_eval_split(corpus_path, lm.cfg.mode, lm.vocab, lm.labels);
  EvalOutput out = evaluate_model(*lm.model, sessions, lm.labels);
  std::string dir = out_dir.empty() ? "." : out_dir;
  ensure_dir(dir);
  std::string tag = split.empty() ? "eval" : split;
  nlohmann::json rep = out.report.to_json();
  rep["split"] = tag;
  write_file_atomic(dir + "/" + tag + "_report.json", rep.dump(2) + "\n");
  write_predictions_jsonl(dir + "/" + tag + "_predictions.jsonl", out.rows);
  std::cout << rep.dump(2) << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& corpus_path, const std::string& out_path) {
  LoadedModel lm = load_for_inference(ckpt_path);
  auto sessions = load_eval_split(corpus_path, lm.cfg.mode, lm.vocab, lm.labels);
  EvalOutput out = evaluate_model(*lm.model, sessions, lm.labels);
  write_predictions_jsonl(out_path, out.rows);
  std::cout << "wrote " << out.rows.size() << " predictions to " << out_path << "\n";
  return 0;
}

int cmd_bench(const std::string& ckpt_path, const std::string& corpus_path, int reps, int warmup,
              const std::string& compare, const std::string& out_path) {
  nlohmann::json result;
  {
    ckpt::Payload probe = ckpt::read_payload(ckpt_path);
    auto sessions = load_eval_split(corpus_path, probe.config.mode, probe.vocab, probe.labels);
    if (compare.empty()) {
      LoadedModel lm = load_for_inference(ckpt_path);
      result["latency"] = bench_one(*lm.model, sessions, reps, warmup);
    } else if (compare == "sha,sha_p") {
      ShaVariant seq = ShaVariant::sequential, par = ShaVariant::parallel;
      LoadedModel a = load_for_inference(ckpt_path, true, true, &seq);
      LoadedModel b = load_for_inference(ckpt_path, true, true, &par);
      result["sha"] = bench_one(*a.model, sessions, reps, warmup);
      result["sha_p"] = bench_one(*b.model, sessions, reps, warmup);
      result["ratio_sha_p_over_sha"] =
          result["sha_p"]["mean_ms"].get<double>() / result["sha"]["mean_ms"].get<double>();
    } else if (compare == "lrm_on,lrm_off") {
      LoadedModel on = load_for_inference(ckpt_path, false, true);
      LoadedModel off = load_for_inference(ckpt_path, false, false);
      result["lrm_on"] = bench_one(*on.model, sessions, reps, warmup);
      result["lrm_off"] = bench_one(*off.model, sessions, reps, warmup);
      result["lrm_overhead"] = result["lrm_on"]["mean_ms"].get<double>() /
                                   result["lrm_off"]["mean_ms"].get<double>() -
                               1.0;
    } else {
      throw ConfigError("--compare expects 'sha,sha_p' or 'lrm_on,lrm_off'");
    }
  }
  std::string text = result.dump(2) + "\n";
  if (!out_path.empty()) write_file_atomic(out_path, text);
  std::cout << text;
  return 0;
}

int cmd_sweep(const std::string& kind, const std::string& config_path,
              const std::vector<std::string>& sets, const std::string& out_csv) {
  RunConfig base = load_config_with_profile(config_path);
  apply_overrides(base, sets);
  base.validate();
  struct Point {
    std::string label;
    RunConfig cfg;
  };
  std::vector<Point> grid;
  if (kind == "alpha") {
    for (int i = 0; i <= 10; ++i) {
      RunConfig c = base;
      c.alpha = 0.05 * i;
      grid.push_back({std::to_string(c.alpha), c});
    }
  } else if (kind == "lambda") {
    for (int i = 0; i <= 4; ++i) {
      RunConfig c = base;
      c.lambda = 0.25 * i;
      grid.push_back({std::to_string(c.lambda), c});
    }
  } else if (kind == "lrm_position") {
    for (int k = 1; k < base.encoder_layers; ++k) {
      RunConfig c = base;
      c.lrm_enabled = true;
      c.lrm_positions = {k};
      grid.push_back({std::to_string(k) + "-" + std::to_string(k + 1), c});
    }
  } else if (kind == "lrm_count") {
    for (int n = 1; n < base.encoder_layers; ++n) {
      RunConfig c = base;
      c.lrm_enabled = true;
      c.lrm_positions.clear();
      for (int k = 1; k <= n; ++k) c.lrm_positions.push_back(k);
      grid.push_back({std::to_string(n), c});
    }
  } else {
    throw ConfigError("unknown sweep kind '" + kind + "'");
  }
  if (grid.empty()) throw ConfigError("sweep grid is empty");

  std::ostringstream csv;
  csv << "kind,value,intent_accuracy,slot_f1,overall_accuracy\n";
  for (size_t i = 0; i < grid.size(); ++i) {
    RunConfig c = grid[i].cfg;
    c.output_dir = base.output_dir + "/sweep_" + kind + "_" + std::to_string(i);
    RunArtifacts art = run_training<double>(c);
    csv << kind << "," << grid[i].label << "," << art.final_report.intent_accuracy << ","
        << art.final_report.slot_f1 << "," << art.final_report.overall_accuracy << "\n";
    std::cerr << kind << "=" << grid[i].label << " overall " << art.final_report.overall_accuracy << "\n";
  }
  if (!out_csv.empty())
    write_file_atomic(out_csv, csv.str());
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-turn spoken language understanding: training, evaluation and latency tools"};
  app.require_subcommand(0, 1);

  bool help_config = false;
  app.add_flag("--help-config", help_config, "print every config key and exit");

  // train
  auto* train = app.add_subcommand("train", "train a model from a config file");
  std::string train_config;
  std::vector<std::string> train_sets;
  std::string variant, ablation, out_dir;
  bool no_slg = false, no_lrm = false;
  int repeats = -1, epochs = -1;
  int64_t seed = -1;
  train->add_option("--config", train_config, "config file (key=value)");
  train->add_option("--set", train_sets, "override: key=value (repeatable)");
  train->add_option("--variant", variant, "sha | sha_p | basic");
  train->add_option("--ablation", ablation, "full | utterance_only | result_only | result_attention_only | off");
  train->add_flag("--no-slg", no_slg, "disable the generation task");
  train->add_flag("--no-lrm", no_lrm, "disable mid-stack refinement");
  train->add_option("--repeats", repeats, "train R seeds, report mean +- std");
  train->add_option("--seed", seed, "master seed");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--out", out_dir, "output directory");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  std::string eval_ckpt, eval_corpus, eval_split, eval_out;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--corpus", eval_corpus)->required();
  eval->add_option("--split", eval_split, "name used in report files");
  eval->add_option("--out", eval_out, "output directory");

  // predict
  auto* predict = app.add_subcommand("predict", "dump predictions for a corpus");
  std::string pr_ckpt, pr_corpus, pr_out;
  predict->add_option("--checkpoint", pr_ckpt)->required();
  predict->add_option("--corpus", pr_corpus)->required();
  predict->add_option("--out", pr_out, "output JSONL path")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "single-stream latency benchmark");
  std::string b_ckpt, b_corpus, b_compare, b_out;
  int b_reps = 100, b_warmup = 10;
  bench->add_option("--checkpoint", b_ckpt)->required();
  bench->add_option("--corpus", b_corpus)->required();
  bench->add_option("--reps", b_reps, "passes over the corpus (default 100)");
  bench->add_option("--warmup", b_warmup, "discarded warmup utterances (default 10)");
  bench->add_option("--compare", b_compare, "sha,sha_p | lrm_on,lrm_off");
  bench->add_option("--out", b_out, "write the JSON result here too");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "grid runs: lrm_position | lrm_count | alpha | lambda");
  std::string s_kind, s_config, s_out;
  std::vector<std::string> s_sets;
  sweep->add_option("--kind", s_kind)->required();
  sweep->add_option("--config", s_config);
  sweep->add_option("--set", s_sets, "override: key=value (repeatable)");
  sweep->add_option("--out", s_out, "CSV output path");

  // convert
  auto* convert = app.add_subcommand("convert", "tab-separated conll-style file -> corpus JSONL");
  std::string c_in, c_out;
  convert->add_option("--in", c_in)->required();
  convert->add_option("--out", c_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (help_config) {
      std::cout << slu::config_key_help();
      return 0;
    }
    if (train->parsed()) {
      if (!variant.empty()) {
        if (variant == "sha") train_sets.push_back("sha_variant=sequential");
        else if (variant == "sha_p") train_sets.push_back("sha_variant=parallel");
        else if (variant == "basic") train_sets.push_back("sha_ablation=off");
        else throw slu::ConfigError("--variant expects sha | sha_p | basic, got '" + variant + "'");
      }
      if (!ablation.empty()) train_sets.push_back("sha_ablation=" + ablation);
      if (no_slg) train_sets.push_back("slg_enabled=false");
      if (no_lrm) train_sets.push_back("lrm_enabled=false");
      if (repeats > 0) train_sets.push_back("repeats=" + std::to_string(repeats));
      if (seed >= 0) train_sets.push_back("seed=" + std::to_string(seed));
      if (epochs >= 0) train_sets.push_back("epochs=" + std::to_string(epochs));
      if (!out_dir.empty()) train_sets.push_back("output_dir=" + out_dir);
      return cmd_train(train_config, train_sets);
    }
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_corpus, eval_split, eval_out);
    if (predict->parsed()) return cmd_predict(pr_ckpt, pr_corpus, pr_out);
    if (bench->parsed()) return cmd_bench(b_ckpt, b_corpus, b_reps, b_warmup, b_compare, b_out);
    if (sweep->parsed()) return cmd_sweep(s_kind, s_config, s_sets, s_out);
    if (convert->parsed()) {
      slu::convert_conll(c_in, c_out);
      std::cout << "wrote " << c_out << "\n";
      return 0;
    }
    std::cout << app.help();
    return 0;
  } catch (const slu::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const slu::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const slu::IoError& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const slu::SchemaError& e) {
    std::cerr << e.what() << "\n";
    return 4;
  } catch (const slu::LabelError& e) {
    std::cerr << e.what() << "\n";
    return 4;
  } catch (const slu::NumericalError& e) {
    std::cerr << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}

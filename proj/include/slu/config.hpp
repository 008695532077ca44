#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "slu/errors.hpp"

namespace slu {

enum class TaskMode { multi_turn, single_turn };
enum class ShaVariant { sequential, parallel };
enum class ShaAblation { full, utterance_only, result_only, result_attention_only, off };
enum class HistorySource { gold, predicted };
enum class Precision { f64, f32 };

inline const char* to_string(TaskMode m) { return m == TaskMode::multi_turn ? "multi_turn" : "single_turn"; }
inline const char* to_string(ShaVariant v) { return v == ShaVariant::sequential ? "sequential" : "parallel"; }
inline const char* to_string(ShaAblation a) {
  switch (a) {
    case ShaAblation::full: return "full";
    case ShaAblation::utterance_only: return "utterance_only";
    case ShaAblation::result_only: return "result_only";
    case ShaAblation::result_attention_only: return "result_attention_only";
    case ShaAblation::off: return "off";
  }
  return "?";
}
inline const char* to_string(HistorySource h) { return h == HistorySource::gold ? "gold" : "predicted"; }
inline const char* to_string(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

// Every architectural and run-level knob in one place. Defaults come from
// the two reference setups (multi-turn and single-turn); see
// default_multi_turn() / default_single_turn().
struct RunConfig {
  // model
  TaskMode mode = TaskMode::multi_turn;
  Precision precision = Precision::f64;
  int d_model = 768;
  int heads = 8;
  int d_ff = 0;  // 0 -> 4 * d_model
  int sha_layers = 3;      // N
  int encoder_layers = 6;  // M
  int decoder_layers = 6;
  int rel_pos_clip = 16;  // l, farthest relative offset
  double dropout = 0.3;
  ShaVariant sha_variant = ShaVariant::sequential;
  ShaAblation sha_ablation = ShaAblation::full;
  bool lrm_enabled = true;
  std::vector<int> lrm_positions = {2};  // apply between layer k and k+1
  bool lrm_shared_heads = true;
  bool lrm_intermediate_loss = false;  // extra loss on the preliminary predictions
  bool standard_residual = false;

  // slg
  bool slg_enabled = true;
  double alpha = 0.35;
  double lambda = 0.75;
  bool slg_consistency_both = false;

  // train
  uint64_t seed = 1;
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 5e-5;
  std::string optimizer = "adamw";
  double weight_decay = 0.01;
  double grad_clip = 0.0;
  HistorySource history_source = HistorySource::gold;
  int repeats = 1;

  // data
  std::string train_path, valid_path, test_path;

  // output
  std::string output_dir = "runs";

  // bench
  int bench_reps = 100;
  int bench_warmup = 10;

  int effective_d_ff() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  bool sha_active() const { return mode == TaskMode::multi_turn && sha_ablation != ShaAblation::off; }

  static RunConfig default_multi_turn() { return RunConfig{}; }

  static RunConfig default_single_turn() {
    RunConfig c;
    c.mode = TaskMode::single_turn;
    c.d_model = 128;
    c.learning_rate = 1e-3;
    c.optimizer = "adam";
    c.sha_ablation = ShaAblation::off;
    return c;
  }

  void validate() const {
    if (d_model <= 0) throw ConfigError("d_model must be positive");
    if (heads <= 0 || d_model % heads != 0)
      throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by heads " + std::to_string(heads));
    if (sha_layers < 1) throw ConfigError("sha_layers must be >= 1");
    if (encoder_layers < 1) throw ConfigError("encoder_layers must be >= 1");
    if (decoder_layers < 1) throw ConfigError("decoder_layers must be >= 1");
    if (rel_pos_clip < 0) throw ConfigError("rel_pos_clip must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
    if (alpha < 0.0 || alpha > 0.5) throw ConfigError("alpha must lie in [0,0.5]");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0,1]");
    for (int k : lrm_positions)
      if (k < 1 || k >= encoder_layers)
        throw ConfigError("lrm position " + std::to_string(k) + " outside [1," + std::to_string(encoder_layers) + ")");
    if (optimizer != "adamw" && optimizer != "adam") throw ConfigError("unknown optimizer '" + optimizer + "'");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (bench_warmup < 0) throw ConfigError("bench_warmup must be >= 0");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected boolean, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (...) {
      throw ConfigError("key '" + key + "': bad integer '" + item + "'");
    }
  }
  return out;
}

template <class T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream ss(v);
  T out;
  ss >> out;
  if (ss.fail() || !ss.eof()) throw ConfigError("key '" + key + "': bad value '" + v + "'");
  return out;
}

}  // namespace detail

// Applies one key=value pair; unknown keys are rejected by name.
inline void apply_config_key(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "mode") {
    if (value == "multi_turn") c.mode = TaskMode::multi_turn;
    else if (value == "single_turn") c.mode = TaskMode::single_turn;
    else throw ConfigError("key 'mode': unknown value '" + value + "'");
  } else if (key == "precision") {
    if (value == "f64") c.precision = Precision::f64;
    else if (value == "f32") c.precision = Precision::f32;
    else throw ConfigError("key 'precision': unknown value '" + value + "'");
  } else if (key == "d_model") c.d_model = parse_num<int>(value, key);
  else if (key == "heads") c.heads = parse_num<int>(value, key);
  else if (key == "d_ff") c.d_ff = parse_num<int>(value, key);
  else if (key == "sha_layers") c.sha_layers = parse_num<int>(value, key);
  else if (key == "encoder_layers") c.encoder_layers = parse_num<int>(value, key);
  else if (key == "decoder_layers") c.decoder_layers = parse_num<int>(value, key);
  else if (key == "rel_pos_clip") c.rel_pos_clip = parse_num<int>(value, key);
  else if (key == "dropout") c.dropout = parse_num<double>(value, key);
  else if (key == "sha_variant") {
    if (value == "sequential") c.sha_variant = ShaVariant::sequential;
    else if (value == "parallel") c.sha_variant = ShaVariant::parallel;
    else throw ConfigError("key 'sha_variant': unknown value '" + value + "'");
  } else if (key == "sha_ablation") {
    if (value == "full") c.sha_ablation = ShaAblation::full;
    else if (value == "utterance_only") c.sha_ablation = ShaAblation::utterance_only;
    else if (value == "result_only") c.sha_ablation = ShaAblation::result_only;
    else if (value == "result_attention_only") c.sha_ablation = ShaAblation::result_attention_only;
    else if (value == "off") c.sha_ablation = ShaAblation::off;
    else throw ConfigError("key 'sha_ablation': unknown value '" + value + "'");
  } else if (key == "lrm_enabled") c.lrm_enabled = parse_bool(value, key);
  else if (key == "lrm_positions") c.lrm_positions = parse_int_list(value, key);
  else if (key == "lrm_shared_heads") c.lrm_shared_heads = parse_bool(value, key);
  else if (key == "lrm_intermediate_loss") c.lrm_intermediate_loss = parse_bool(value, key);
  else if (key == "standard_residual") c.standard_residual = parse_bool(value, key);
  else if (key == "slg_enabled") c.slg_enabled = parse_bool(value, key);
  else if (key == "alpha") c.alpha = parse_num<double>(value, key);
  else if (key == "lambda") c.lambda = parse_num<double>(value, key);
  else if (key == "slg_consistency_both") c.slg_consistency_both = parse_bool(value, key);
  else if (key == "seed") c.seed = parse_num<uint64_t>(value, key);
  else if (key == "epochs") c.epochs = parse_num<int>(value, key);
  else if (key == "batch_size") c.batch_size = parse_num<int>(value, key);
  else if (key == "learning_rate") c.learning_rate = parse_num<double>(value, key);
  else if (key == "optimizer") c.optimizer = value;
  else if (key == "weight_decay") c.weight_decay = parse_num<double>(value, key);
  else if (key == "grad_clip") c.grad_clip = parse_num<double>(value, key);
  else if (key == "history_source") {
    if (value == "gold") c.history_source = HistorySource::gold;
    else if (value == "predicted") c.history_source = HistorySource::predicted;
    else throw ConfigError("key 'history_source': unknown value '" + value + "'");
  } else if (key == "repeats") c.repeats = parse_num<int>(value, key);
  else if (key == "train_path") c.train_path = value;
  else if (key == "valid_path") c.valid_path = value;
  else if (key == "test_path") c.test_path = value;
  else if (key == "output_dir") c.output_dir = value;
  else if (key == "bench_reps") c.bench_reps = parse_num<int>(value, key);
  else if (key == "bench_warmup") c.bench_warmup = parse_num<int>(value, key);
  else throw ConfigError("unknown key '" + key + "'");
}

// Flat key=value text. '#' comments and [section] headers are cosmetic.
inline RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[' && s.back() == ']') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + s + "'");
    std::string key = detail::trim(s.substr(0, eq));
    std::string value = detail::trim(s.substr(eq + 1));
    apply_config_key(base, key, value);
  }
  return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), base);
}

inline std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "[model]\n";
  os << "mode = " << to_string(c.mode) << "\n";
  os << "precision = " << to_string(c.precision) << "\n";
  os << "d_model = " << c.d_model << "\n";
  os << "heads = " << c.heads << "\n";
  os << "d_ff = " << c.d_ff << "\n";
  os << "sha_layers = " << c.sha_layers << "\n";
  os << "encoder_layers = " << c.encoder_layers << "\n";
  os << "decoder_layers = " << c.decoder_layers << "\n";
  os << "rel_pos_clip = " << c.rel_pos_clip << "\n";
  os << "dropout = " << c.dropout << "\n";
  os << "sha_variant = " << to_string(c.sha_variant) << "\n";
  os << "sha_ablation = " << to_string(c.sha_ablation) << "\n";
  os << "lrm_enabled = " << (c.lrm_enabled ? "true" : "false") << "\n";
  os << "lrm_positions = ";
  for (size_t i = 0; i < c.lrm_positions.size(); ++i) os << (i ? "," : "") << c.lrm_positions[i];
  os << "\n";
  os << "lrm_shared_heads = " << (c.lrm_shared_heads ? "true" : "false") << "\n";
  os << "lrm_intermediate_loss = " << (c.lrm_intermediate_loss ? "true" : "false") << "\n";
  os << "standard_residual = " << (c.standard_residual ? "true" : "false") << "\n";
  os << "[slg]\n";
  os << "slg_enabled = " << (c.slg_enabled ? "true" : "false") << "\n";
  os << "alpha = " << c.alpha << "\n";
  os << "lambda = " << c.lambda << "\n";
  os << "slg_consistency_both = " << (c.slg_consistency_both ? "true" : "false") << "\n";
  os << "[train]\n";
  os << "seed = " << c.seed << "\n";
  os << "epochs = " << c.epochs << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "learning_rate = " << c.learning_rate << "\n";
  os << "optimizer = " << c.optimizer << "\n";
  os << "weight_decay = " << c.weight_decay << "\n";
  os << "grad_clip = " << c.grad_clip << "\n";
  os << "history_source = " << to_string(c.history_source) << "\n";
  os << "repeats = " << c.repeats << "\n";
  os << "[data]\n";
  os << "train_path = " << c.train_path << "\n";
  os << "valid_path = " << c.valid_path << "\n";
  os << "test_path = " << c.test_path << "\n";
  os << "[output]\n";
  os << "output_dir = " << c.output_dir << "\n";
  os << "[bench]\n";
  os << "bench_reps = " << c.bench_reps << "\n";
  os << "bench_warmup = " << c.bench_warmup << "\n";
  return os.str();
}

// Key documentation for --help-config.
inline std::string config_key_help() {
  return
      "mode                  multi_turn | single_turn\n"
      "precision             f64 | f32\n"
      "d_model               model width (default 768 multi-turn, 128 single-turn)\n"
      "heads                 attention heads (default 8)\n"
      "d_ff                  feed-forward width; 0 means 4*d_model\n"
      "sha_layers            history-attention layers N (default 3)\n"
      "encoder_layers        encoder layers M (default 6)\n"
      "decoder_layers        slot-generation decoder layers (default 6)\n"
      "rel_pos_clip          farthest relative position l (default 16)\n"
      "dropout               dropout ratio in [0,1) (default 0.3)\n"
      "sha_variant           sequential | parallel\n"
      "sha_ablation          full | utterance_only | result_only | result_attention_only | off\n"
      "lrm_enabled           true | false\n"
      "lrm_positions         comma list of layer indices k; refine between k and k+1 (default 2)\n"
      "lrm_shared_heads      preliminary classifier shares the final heads (default true)\n"
      "lrm_intermediate_loss add a loss term on the preliminary predictions (default false)\n"
      "standard_residual     add the conventional residual around encoder self-attention\n"
      "slg_enabled           train the auxiliary generation task (default true)\n"
      "alpha                 consistency weight in [0,0.5] (default 0.35)\n"
      "lambda                generation task weight in [0,1] (default 0.75)\n"
      "slg_consistency_both  let consistency gradients reach the tagger too (default false)\n"
      "seed                  master seed (default 1)\n"
      "epochs                training epochs (default 100)\n"
      "batch_size            (default 32)\n"
      "learning_rate         (default 5e-5 multi-turn, 1e-3 single-turn)\n"
      "optimizer             adamw | adam\n"
      "weight_decay          adamw decoupled decay (default 0.01)\n"
      "grad_clip             global-norm clip; 0 disables (default 0)\n"
      "history_source        gold | predicted (training-time history labels)\n"
      "repeats               seeds per training command (default 1)\n"
      "train_path / valid_path / test_path   corpus JSONL files\n"
      "output_dir            run artifact directory (default 'runs', env SLU_OUTPUT_DIR)\n"
      "bench_reps            latency passes over the corpus (default 100)\n"
      "bench_warmup          discarded warmup utterances (default 10)\n";
}

}  // namespace slu

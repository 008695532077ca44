#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "slu/config.hpp"
#include "slu/data.hpp"
#include "slu/errors.hpp"
#include "slu/model.hpp"
#include "slu/optim.hpp"

namespace slu {
namespace ckpt {

// Versioned little-endian container:
//   magic, version, flags, config echo, vocab, label sets,
//   ordered (name, shape, f64 payload) parameters,
//   optional optimizer moments.
inline constexpr char kMagic[8] = {'S', 'L', 'U', 'C', 'K', 'P', 'T', '\0'};
inline constexpr uint32_t kVersion = 1;
inline constexpr uint32_t kFlagOptimizerState = 1u;

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<char*>(b), 8);
}

inline void put_f64(std::ostream& os, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("checkpoint truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

inline uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("checkpoint truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  uint64_t bits = get_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

inline std::string get_str(std::istream& is) {
  uint64_t n = get_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw IoError("checkpoint truncated");
  return s;
}

}  // namespace detail

struct Payload {
  RunConfig config;
  Vocab vocab;
  LabelSets labels;
  struct Param {
    std::string name;
    std::vector<Index> shape;
    std::vector<double> values;
  };
  std::vector<Param> params;
  bool has_optimizer = false;
  uint64_t optimizer_step = 0;
  std::map<std::string, std::vector<double>> opt_m, opt_v;
};

inline void write_payload(const std::string& path, const Payload& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint '" + path + "'");
  os.write(kMagic, 8);
  detail::put_u32(os, kVersion);
  detail::put_u32(os, p.has_optimizer ? kFlagOptimizerState : 0);
  detail::put_str(os, serialize_config(p.config));
  detail::put_u64(os, static_cast<uint64_t>(p.vocab.id_to_token.size()));
  for (const auto& t : p.vocab.id_to_token) detail::put_str(os, t);
  detail::put_u64(os, static_cast<uint64_t>(p.labels.intents.size()));
  for (const auto& s : p.labels.intents) detail::put_str(os, s);
  detail::put_u64(os, static_cast<uint64_t>(p.labels.slots.size()));
  for (const auto& s : p.labels.slots) detail::put_str(os, s);
  detail::put_u64(os, p.params.size());
  for (const auto& prm : p.params) {
    detail::put_str(os, prm.name);
    detail::put_u32(os, static_cast<uint32_t>(prm.shape.size()));
    for (Index d : prm.shape) detail::put_u64(os, static_cast<uint64_t>(d));
    for (double v : prm.values) detail::put_f64(os, v);
  }
  if (p.has_optimizer) {
    detail::put_u64(os, p.optimizer_step);
    for (const auto& prm : p.params) {
      for (double v : p.opt_m.at(prm.name)) detail::put_f64(os, v);
      for (double v : p.opt_v.at(prm.name)) detail::put_f64(os, v);
    }
  }
  if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

inline Payload read_payload(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw SchemaError("not a checkpoint file: '" + path + "'");
  uint32_t version = detail::get_u32(is);
  if (version != kVersion)
    throw SchemaError("checkpoint version " + std::to_string(version) + " unsupported");
  uint32_t flags = detail::get_u32(is);
  Payload p;
  p.config = parse_config_text(detail::get_str(is), RunConfig{});
  uint64_t nv = detail::get_u64(is);
  p.vocab.id_to_token.clear();
  p.vocab.token_to_id.clear();
  for (uint64_t i = 0; i < nv; ++i) {
    std::string t = detail::get_str(is);
    p.vocab.token_to_id[t] = static_cast<int>(p.vocab.id_to_token.size());
    p.vocab.id_to_token.push_back(t);
  }
  uint64_t ni = detail::get_u64(is);
  for (uint64_t i = 0; i < ni; ++i) p.labels.add_intent(detail::get_str(is));
  uint64_t ns = detail::get_u64(is);
  for (uint64_t i = 0; i < ns; ++i) p.labels.add_slot(detail::get_str(is));
  uint64_t np = detail::get_u64(is);
  for (uint64_t i = 0; i < np; ++i) {
    Payload::Param prm;
    prm.name = detail::get_str(is);
    uint32_t nd = detail::get_u32(is);
    uint64_t count = 1;
    for (uint32_t d = 0; d < nd; ++d) {
      prm.shape.push_back(static_cast<Index>(detail::get_u64(is)));
      count *= static_cast<uint64_t>(prm.shape.back());
    }
    prm.values.resize(count);
    for (uint64_t j = 0; j < count; ++j) prm.values[j] = detail::get_f64(is);
    p.params.push_back(std::move(prm));
  }
  if (flags & kFlagOptimizerState) {
    p.has_optimizer = true;
    p.optimizer_step = detail::get_u64(is);
    for (const auto& prm : p.params) {
      auto& m = p.opt_m[prm.name];
      auto& v = p.opt_v[prm.name];
      m.resize(prm.values.size());
      v.resize(prm.values.size());
      for (auto& x : m) x = detail::get_f64(is);
      for (auto& x : v) x = detail::get_f64(is);
    }
  }
  return p;
}

template <class S>
void save(const std::string& path, const Model<S>& model, const Vocab& vocab, const LabelSets& labels,
          const OptimizerState<S>* opt = nullptr) {
  Payload p;
  p.config = model.cfg;
  // run-specific paths are not part of the model echo
  p.config.train_path.clear();
  p.config.valid_path.clear();
  p.config.test_path.clear();
  p.config.output_dir.clear();
  p.vocab = vocab;
  p.labels = labels;
  auto params = model.parameters();
  for (const auto& [name, t] : params.items) {
    Payload::Param prm;
    prm.name = name;
    prm.shape = t.shape();
    prm.values.assign(t.data(), t.data() + t.numel());
    p.params.push_back(std::move(prm));
  }
  if (opt) {
    p.has_optimizer = true;
    p.optimizer_step = opt->step_count;
    for (const auto& [name, t] : params.items) {
      auto mi = opt->m.find(name);
      auto vi = opt->v.find(name);
      std::vector<double> zeros(static_cast<size_t>(t.numel()), 0.0);
      p.opt_m[name] = mi != opt->m.end() ? mi->second : zeros;
      p.opt_v[name] = vi != opt->v.end() ? vi->second : zeros;
    }
  }
  write_payload(path, p);
}

// Copies checkpoint values into an existing model by name. Parameters present
// in the file but absent from the model (e.g. decoder weights at inference)
// are skipped when `lenient` is set; parameters the model has but the file
// lacks always raise.
template <class S>
void load_into(const Payload& p, Model<S>& model, bool lenient) {
  auto params = model.parameters();
  std::map<std::string, const Payload::Param*> by_name;
  for (const auto& prm : p.params) by_name[prm.name] = &prm;
  for (auto& [name, t] : params.items) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw SchemaError("checkpoint missing parameter '" + name + "'");
    const auto& prm = *it->second;
    if (prm.shape != t.shape())
      throw SchemaError("checkpoint parameter '" + name + "' has shape " + shape_str(prm.shape) +
                        ", model expects " + shape_str(t.shape()));
    for (Index i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(prm.values[static_cast<size_t>(i)]);
    by_name.erase(it);
  }
  if (!lenient && !by_name.empty())
    throw SchemaError("checkpoint has unexpected parameter '" + by_name.begin()->first + "'");
}

// Drops every parameter whose name starts with `prefix` (e.g. "slg.").
inline void strip_prefix(const std::string& in_path, const std::string& out_path, const std::string& prefix) {
  Payload p = read_payload(in_path);
  std::vector<Payload::Param> kept;
  for (auto& prm : p.params)
    if (prm.name.rfind(prefix, 0) != 0) kept.push_back(std::move(prm));
  p.params = std::move(kept);
  if (p.has_optimizer) {
    p.has_optimizer = false;  // moments no longer aligned
    p.opt_m.clear();
    p.opt_v.clear();
  }
  write_payload(out_path, p);
}

}  // namespace ckpt
}  // namespace slu

// SPDX-License-Identifier: Apache-2.0
#include "dsal/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

#include "dsal/errors.hpp"

namespace dsal {

namespace {

struct KeyValue {
  std::string value;
  int line = 0;
  bool used = false;
};

struct Section {
  int line = 0;
  std::map<std::string, KeyValue> keys;
};

using SectionMap = std::map<std::string, Section>;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

SectionMap parse_sections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  SectionMap sections;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(path + ":" + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError(path + ":" + std::to_string(lineno) + ": empty section name");
      auto [sit, fresh] = sections.try_emplace(section);
      if (fresh) sit->second.line = lineno;
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected 'key = value' or '[section]'");
    if (section.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    auto [it, inserted] =
        sections[section].keys.try_emplace(key, KeyValue{value, lineno, false});
    if (!inserted)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                        "' in [" + section + "] (first at line " +
                        std::to_string(it->second.line) + ")");
  }
  return sections;
}

struct Reader {
  const std::string& path;
  SectionMap& sections;
  std::set<std::string> known_sections;

  [[noreturn]] void fail(const KeyValue& kv, const std::string& msg) const {
    throw ConfigError(path + ":" + std::to_string(kv.line) + ": " + msg);
  }

  KeyValue* find(const std::string& section, const std::string& key) {
    known_sections.insert(section);
    auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    auto k = s->second.keys.find(key);
    if (k == s->second.keys.end()) return nullptr;
    k->second.used = true;
    return &k->second;
  }

  void integer(const std::string& sec, const std::string& key, int& out, long lo, long hi) {
    KeyValue* kv = find(sec, key);
    if (!kv) return;
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(kv->value.c_str(), &end, 10);
    if (errno != 0 || end == kv->value.c_str() || *end != '\0')
      fail(*kv, "'" + kv->value + "' is not an integer for " + sec + "." + key);
    if (v < lo || v > hi)
      fail(*kv, sec + "." + key + " = " + kv->value + " outside [" + std::to_string(lo) +
                    ", " + std::to_string(hi) + "]");
    out = static_cast<int>(v);
  }

  void real(const std::string& sec, const std::string& key, double& out, double lo,
            double hi) {
    KeyValue* kv = find(sec, key);
    if (!kv) return;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(kv->value.c_str(), &end);
    if (errno != 0 || end == kv->value.c_str() || *end != '\0')
      fail(*kv, "'" + kv->value + "' is not a number for " + sec + "." + key);
    if (!(v >= lo && v <= hi))
      fail(*kv, sec + "." + key + " = " + kv->value + " outside [" + std::to_string(lo) +
                    ", " + std::to_string(hi) + "]");
    out = v;
  }

  void realf(const std::string& sec, const std::string& key, float& out, double lo,
             double hi) {
    double v = out;
    real(sec, key, v, lo, hi);
    out = static_cast<float>(v);
  }

  void boolean(const std::string& sec, const std::string& key, bool& out) {
    KeyValue* kv = find(sec, key);
    if (!kv) return;
    if (kv->value == "true" || kv->value == "1") out = true;
    else if (kv->value == "false" || kv->value == "0") out = false;
    else fail(*kv, "'" + kv->value + "' is not a boolean for " + sec + "." + key);
  }

  void text(const std::string& sec, const std::string& key, std::string& out) {
    KeyValue* kv = find(sec, key);
    if (!kv) return;
    if (kv->value.empty()) fail(*kv, sec + "." + key + " must not be empty");
    out = kv->value;
  }

  void seed64(const std::string& sec, const std::string& key, uint64_t& out) {
    KeyValue* kv = find(sec, key);
    if (!kv) return;
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(kv->value.c_str(), &end, 10);
    if (errno != 0 || end == kv->value.c_str() || *end != '\0')
      fail(*kv, "'" + kv->value + "' is not an unsigned integer for " + sec + "." + key);
    out = static_cast<uint64_t>(v);
  }

  std::vector<std::string> list(const std::string& sec, const std::string& key,
                                const std::vector<std::string>& fallback) {
    KeyValue* kv = find(sec, key);
    if (!kv) return fallback;
    std::vector<std::string> out;
    std::string token;
    for (char c : kv->value + ",") {
      if (c == ',') {
        token = trim(token);
        if (!token.empty()) out.push_back(token);
        token.clear();
      } else {
        token += c;
      }
    }
    if (out.empty()) fail(*kv, sec + "." + key + " must list at least one item");
    return out;
  }

  void reject_unknown() const {
    for (const auto& [sec, body] : sections) {
      if (!known_sections.count(sec))
        throw ConfigError(path + ":" + std::to_string(body.line) + ": unknown section [" +
                          sec + "]");
      for (const auto& [key, kv] : body.keys)
        if (!kv.used)
          throw ConfigError(path + ":" + std::to_string(kv.line) + ": unknown key '" + key +
                            "' in [" + sec + "]");
    }
  }
};

}  // namespace

ExperimentConfig default_experiment_config() { return ExperimentConfig{}; }

ExperimentConfig load_experiment_config(const std::string& path) {
  SectionMap sections = parse_sections(path);
  Reader r{path, sections, {}};
  ExperimentConfig c;

  r.integer("dataset", "height", c.dataset.height, 8, 4096);
  r.integer("dataset", "width", c.dataset.width, 8, 4096);
  r.integer("dataset", "n_train", c.dataset.n_train, 1, 100000);
  r.integer("dataset", "n_val", c.dataset.n_val, 1, 100000);
  r.integer("dataset", "n_test", c.dataset.n_test, 1, 100000);
  r.integer("dataset", "shapes_min", c.dataset.shapes_min, 1, 64);
  r.integer("dataset", "shapes_max", c.dataset.shapes_max, 1, 64);
  r.real("dataset", "noise_sigma", c.dataset.noise_sigma, 0.0, 1.0);
  r.real("dataset", "fg_level", c.dataset.fg_level, 0.0, 1.0);
  r.real("dataset", "bg_level", c.dataset.bg_level, 0.0, 1.0);
  r.real("dataset", "illum_amplitude", c.dataset.illum_amplitude, 0.0, 1.0);
  r.seed64("dataset", "seed", c.dataset.seed);

  r.integer("model", "depth", c.model.depth, 1, 8);
  r.integer("model", "base_channels", c.model.base_channels, 1, 256);
  r.integer("model", "classes", c.model.classes, 2, 2);
  r.integer("model", "aux_stage_lower", c.model.aux_stage_lower, 0, 7);
  r.integer("model", "aux_stage_middle", c.model.aux_stage_middle, 0, 7);
  r.realf("model", "alpha_l", c.model.loss_weights.alpha_l, 0.0, 100.0);
  r.realf("model", "alpha_m", c.model.loss_weights.alpha_m, 0.0, 100.0);
  r.realf("model", "alpha_f", c.model.loss_weights.alpha_f, 0.0, 100.0);

  std::vector<std::string> policy_names{"consistency_high", "consistency_low", "random"};
  policy_names = r.list("loop", "policies", policy_names);
  r.integer("loop", "n_init", c.n_init, 1, 100000);
  r.integer("loop", "k", c.k, 1, 100000);
  r.integer("loop", "label_budget", c.label_budget, 1, 100000);
  r.integer("loop", "epochs_per_round", c.epochs_per_round, 1, 100000);
  r.integer("loop", "batch_size", c.batch_size, 1, 4096);
  r.boolean("loop", "full_reference", c.full_reference);
  r.integer("loop", "full_reference_epochs", c.full_reference_epochs, 1, 100000);
  std::vector<std::string> seed_strs{"1", "2", "3", "4", "5"};
  seed_strs = r.list("loop", "seeds", seed_strs);

  r.text("output", "dir", c.output_dir);
  r.text("output", "dataset_dir", c.dataset_dir);
  r.reject_unknown();

  c.policies.clear();
  for (const std::string& name : policy_names) {
    try {
      c.policies.push_back(QueryPolicy{parse_policy(name), c.k});
    } catch (const ConfigError& e) {
      const KeyValue* kv = r.find("loop", "policies");
      throw ConfigError(kv ? path + ":" + std::to_string(kv->line) + ": " + e.what()
                           : path + ": " + e.what());
    }
  }
  c.seeds.clear();
  for (const std::string& s : seed_strs) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (errno != 0 || end == s.c_str() || *end != '\0')
      throw ConfigError(path + ": seed '" + s + "' is not an unsigned integer");
    c.seeds.push_back(static_cast<uint64_t>(v));
  }

  // Cross-field checks the individual modules cannot see.
  if (c.dataset.shapes_max < c.dataset.shapes_min)
    throw ConfigError(path + ": dataset.shapes_max < dataset.shapes_min");
  if (c.label_budget < c.n_init)
    throw ConfigError(path + ": loop.label_budget must be >= loop.n_init");
  if (c.n_init > c.dataset.n_train)
    throw ConfigError(path + ": loop.n_init exceeds dataset.n_train");
  const int down = 1 << c.model.depth;
  if (c.dataset.height % down != 0 || c.dataset.width % down != 0)
    throw ConfigError(path + ": dataset resolution " + std::to_string(c.dataset.height) +
                      "x" + std::to_string(c.dataset.width) +
                      " is not divisible by 2^depth = " + std::to_string(down));

  c.model.input_h = c.dataset.height;
  c.model.input_w = c.dataset.width;
  return c;
}

std::string canonical_config(const ExperimentConfig& c) {
  char buf[64];
  std::string out;
  auto add = [&](const std::string& k, const std::string& v) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  };
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  add("dataset.height", std::to_string(c.dataset.height));
  add("dataset.width", std::to_string(c.dataset.width));
  add("dataset.n_train", std::to_string(c.dataset.n_train));
  add("dataset.n_val", std::to_string(c.dataset.n_val));
  add("dataset.n_test", std::to_string(c.dataset.n_test));
  add("dataset.shapes_min", std::to_string(c.dataset.shapes_min));
  add("dataset.shapes_max", std::to_string(c.dataset.shapes_max));
  add("dataset.noise_sigma", num(c.dataset.noise_sigma));
  add("dataset.fg_level", num(c.dataset.fg_level));
  add("dataset.bg_level", num(c.dataset.bg_level));
  add("dataset.illum_amplitude", num(c.dataset.illum_amplitude));
  add("dataset.seed", std::to_string(c.dataset.seed));
  add("model.depth", std::to_string(c.model.depth));
  add("model.base_channels", std::to_string(c.model.base_channels));
  add("model.classes", std::to_string(c.model.classes));
  add("model.aux_stage_lower", std::to_string(c.model.aux_stage_lower));
  add("model.aux_stage_middle", std::to_string(c.model.aux_stage_middle));
  add("model.alpha_l", num(c.model.loss_weights.alpha_l));
  add("model.alpha_m", num(c.model.loss_weights.alpha_m));
  add("model.alpha_f", num(c.model.loss_weights.alpha_f));
  std::string policies;
  for (const QueryPolicy& p : c.policies) {
    if (!policies.empty()) policies += ',';
    policies += policy_name(p.kind);
  }
  add("loop.policies", policies);
  std::string seeds;
  for (uint64_t s : c.seeds) {
    if (!seeds.empty()) seeds += ',';
    seeds += std::to_string(s);
  }
  add("loop.seeds", seeds);
  add("loop.n_init", std::to_string(c.n_init));
  add("loop.k", std::to_string(c.k));
  add("loop.label_budget", std::to_string(c.label_budget));
  add("loop.epochs_per_round", std::to_string(c.epochs_per_round));
  add("loop.batch_size", std::to_string(c.batch_size));
  add("loop.full_reference", c.full_reference ? "true" : "false");
  add("loop.full_reference_epochs", std::to_string(c.full_reference_epochs));
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string canon = canonical_config(cfg);
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : canon) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentPlan make_plan(const ExperimentConfig& cfg) {
  ExperimentPlan plan;
  plan.model = cfg.model;
  plan.train.epochs_per_round = cfg.epochs_per_round;
  plan.train.batch_size = cfg.batch_size;
  plan.train.label_cap = std::min(cfg.label_budget, cfg.dataset.n_train);
  plan.policies = cfg.policies;
  plan.seeds = cfg.seeds;
  plan.n_init = cfg.n_init;
  plan.label_budget = cfg.label_budget;
  return plan;
}

}  // namespace dsal

#pragma once

// Run configuration: YAML mapping, either flat or grouped into the sections
// data / train / experiment / interval. See configs/README.md for the keys.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "stablerelu/errors.hpp"
#include "stablerelu/experiments.hpp"
#include "stablerelu/io/csv.hpp"

namespace stablerelu::cli {

enum class FirstLayer { kStratified, kInit };

struct RunConfig {
  ExperimentConfig exp;
  std::optional<std::uint64_t> data_seed;  // defaults to train seed
  FirstLayer first_layer = FirstLayer::kStratified;
  std::string params_file;
  std::uint64_t test_seed = 12345;

  // Data seed actually used.
  std::uint64_t resolved_data_seed() const { return data_seed.value_or(exp.train.seed); }
};

namespace detail {

template <typename T>
T as(const YAML::Node& node, const std::string& key, const char* what) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw Error(ErrorKind::kInvalidValue, key + ": expected " + what);
  }
}

inline long as_long(const YAML::Node& n, const std::string& key) {
  return as<long>(n, key, "an integer");
}
inline double as_double(const YAML::Node& n, const std::string& key) {
  return as<double>(n, key, "a number");
}
inline std::uint64_t as_seed(const YAML::Node& n, const std::string& key) {
  const long v = as_long(n, key);
  if (v < 0) throw Error(ErrorKind::kInvalidValue, key + ": must be >= 0");
  return static_cast<std::uint64_t>(v);
}
inline std::string as_string(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) throw Error(ErrorKind::kInvalidValue, key + ": expected a string");
  return n.Scalar();
}

struct KeySpec {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const YAML::Node&)> set;
};

inline const std::vector<KeySpec>& key_table() {
  using N = const YAML::Node&;
  static const std::vector<KeySpec> table = {
      {"data", "design", [](RunConfig& c, N n) {
         const std::string v = as_string(n, "design");
         if (v == "hat") c.exp.data.design = Design::kHat;
         else if (v == "counterexample") c.exp.data.design = Design::kCounterexample;
         else if (v == "custom-file") c.exp.data.design = Design::kCustomFile;
         else throw Error(ErrorKind::kInvalidValue, "design: must be hat, counterexample or custom-file");
       }},
      {"data", "n", [](RunConfig& c, N n) { c.exp.data.n = as_long(n, "n"); }},
      {"data", "sigma", [](RunConfig& c, N n) { c.exp.data.sigma = as_double(n, "sigma"); }},
      {"data", "x_max", [](RunConfig& c, N n) { c.exp.data.x_max = as_double(n, "x_max"); }},
      {"data", "data_seed", [](RunConfig& c, N n) { c.data_seed = as_seed(n, "data_seed"); }},
      {"data", "data_file", [](RunConfig& c, N n) { c.exp.data.file = as_string(n, "data_file"); }},
      {"data", "ground_truth", [](RunConfig& c, N n) {
         const std::string v = as_string(n, "ground_truth");
         if (v != "none" && !ground_truth_by_name(v)) {
           throw Error(ErrorKind::kInvalidValue, "ground_truth: must be none, hat or zero");
         }
         c.exp.data.ground_truth = v == "none" ? "" : v;
       }},
      {"train", "k", [](RunConfig& c, N n) { c.exp.train.k = as_long(n, "k"); }},
      {"train", "eta", [](RunConfig& c, N n) { c.exp.train.eta = as_double(n, "eta"); }},
      {"train", "max_steps", [](RunConfig& c, N n) { c.exp.train.max_steps = as_long(n, "max_steps"); }},
      {"train", "log_every", [](RunConfig& c, N n) { c.exp.train.log_every = as_long(n, "log_every"); }},
      {"train", "spectrum_every", [](RunConfig& c, N n) { c.exp.train.spectrum_every = as_long(n, "spectrum_every"); }},
      {"train", "seed", [](RunConfig& c, N n) { c.exp.train.seed = as_seed(n, "seed"); }},
      {"train", "init", [](RunConfig& c, N n) {
         const std::string v = as_string(n, "init");
         if (v == "uniform_fanin") c.exp.train.init.kind = InitScheme::Kind::kUniformFanin;
         else if (v == "uniform_custom") c.exp.train.init.kind = InitScheme::Kind::kUniformCustom;
         else throw Error(ErrorKind::kInvalidValue, "init: must be uniform_fanin or uniform_custom");
       }},
      {"train", "init_a_w1", [](RunConfig& c, N n) { c.exp.train.init.a_w1 = as_double(n, "init_a_w1"); }},
      {"train", "init_a_b1", [](RunConfig& c, N n) { c.exp.train.init.a_b1 = as_double(n, "init_a_b1"); }},
      {"train", "init_a_w2", [](RunConfig& c, N n) { c.exp.train.init.a_w2 = as_double(n, "init_a_w2"); }},
      {"train", "stop_grad_norm", [](RunConfig& c, N n) { c.exp.train.stop_grad_norm = as_double(n, "stop_grad_norm"); }},
      {"train", "steady_window", [](RunConfig& c, N n) { c.exp.train.steady_window = as_long(n, "steady_window"); }},
      {"train", "steady_rel_tol", [](RunConfig& c, N n) { c.exp.train.steady_rel_tol = as_double(n, "steady_rel_tol"); }},
      {"train", "beos_eps", [](RunConfig& c, N n) { c.exp.train.beos_eps = as_double(n, "beos_eps"); }},
      {"train", "diff_tol", [](RunConfig& c, N n) { c.exp.train.diff_tol = as_double(n, "diff_tol"); }},
      {"experiment", "delta", [](RunConfig& c, N n) { c.exp.delta = as_double(n, "delta"); }},
      {"experiment", "reps", [](RunConfig& c, N n) { c.exp.reps = as_long(n, "reps"); }},
      {"experiment", "eta_grid", [](RunConfig& c, N n) {
         c.exp.eta_grid = as<std::vector<double>>(n, "eta_grid", "a list of numbers");
       }},
      {"experiment", "n_grid", [](RunConfig& c, N n) {
         c.exp.n_grid = as<std::vector<long>>(n, "n_grid", "a list of integers");
       }},
      {"experiment", "equal_time", [](RunConfig& c, N n) { c.exp.equal_time = as<bool>(n, "equal_time", "true or false"); }},
      {"experiment", "eta_exponent", [](RunConfig& c, N n) { c.exp.eta_exponent = as_double(n, "eta_exponent"); }},
      {"experiment", "width_per_n", [](RunConfig& c, N n) { c.exp.width_per_n = as_long(n, "width_per_n"); }},
      {"experiment", "dslope_tol", [](RunConfig& c, N n) { c.exp.dslope_tol = as_double(n, "dslope_tol"); }},
      {"experiment", "basis_points", [](RunConfig& c, N n) { c.exp.basis_points = as_long(n, "basis_points"); }},
      {"experiment", "gap_samples", [](RunConfig& c, N n) { c.exp.gap_samples = as_long(n, "gap_samples"); }},
      {"experiment", "test_seed", [](RunConfig& c, N n) { c.test_seed = as_seed(n, "test_seed"); }},
      {"experiment", "workers", [](RunConfig& c, N n) { c.exp.workers = as_long(n, "workers"); }},
      {"experiment", "first_layer", [](RunConfig& c, N n) {
         const std::string v = as_string(n, "first_layer");
         if (v == "stratified") c.first_layer = FirstLayer::kStratified;
         else if (v == "init") c.first_layer = FirstLayer::kInit;
         else throw Error(ErrorKind::kInvalidValue, "first_layer: must be stratified or init");
       }},
      {"experiment", "params_file", [](RunConfig& c, N n) { c.params_file = as_string(n, "params_file"); }},
      {"interval", "interval", [](RunConfig& c, N n) {
         const auto v = as<std::vector<double>>(n, "interval", "a list [lo, hi]");
         if (v.size() != 2) throw Error(ErrorKind::kInvalidValue, "interval: expected [lo, hi]");
         c.exp.interval.fixed = Interval{v[0], v[1]};
       }},
      {"interval", "interval_c", [](RunConfig& c, N n) { c.exp.interval.c = as_double(n, "interval_c"); }},
      {"interval", "interval_grid_step", [](RunConfig& c, N n) { c.exp.interval.grid_step = as_double(n, "interval_grid_step"); }},
  };
  return table;
}

inline const KeySpec* find_key(const std::string& key) {
  for (const auto& k : key_table()) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

inline bool is_section(const std::string& s) {
  return s == "data" || s == "train" || s == "experiment" || s == "interval";
}

inline void apply(RunConfig& c, const std::string& key, const YAML::Node& value,
                  const std::string& section) {
  const KeySpec* spec = find_key(key);
  const std::string where = section.empty() ? key : section + "." + key;
  if (spec == nullptr || (!section.empty() && section != spec->section)) {
    throw Error(ErrorKind::kUnknownKey, where);
  }
  spec->set(c, value);
}

}  // namespace detail

// Validates the resolved config; errors name the offending key.
inline void validate(const RunConfig& c) {
  c.exp.validate();
  const auto& init = c.exp.train.init;
  if (init.kind == InitScheme::Kind::kUniformCustom) {
    if (!(init.a_w1 > 0.0)) throw Error(ErrorKind::kInvalidValue, "init_a_w1: must be > 0");
    if (!(init.a_b1 > 0.0)) throw Error(ErrorKind::kInvalidValue, "init_a_b1: must be > 0");
    if (!(init.a_w2 > 0.0)) throw Error(ErrorKind::kInvalidValue, "init_a_w2: must be > 0");
  }
  if (c.exp.data.design == Design::kCustomFile && c.exp.data.file.empty()) {
    throw Error(ErrorKind::kInvalidValue, "data_file: required for design custom-file");
  }
}

// Parses YAML text plus key=value overrides (values are YAML scalars or
// flow sequences, e.g. eta_grid=[0.4,0.1]).
inline RunConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {}) {
  RunConfig c;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& ex) {
    throw Error(ErrorKind::kInvalidValue, std::string("config: ") + ex.what());
  }
  if (root && !root.IsNull()) {
    if (!root.IsMap()) throw Error(ErrorKind::kInvalidValue, "config: top level must be a mapping");
    for (const auto& kv : root) {
      const std::string key = kv.first.as<std::string>();
      if (detail::is_section(key) && kv.second.IsMap()) {
        for (const auto& inner : kv.second) {
          detail::apply(c, inner.first.as<std::string>(), inner.second, key);
        }
      } else {
        detail::apply(c, key, kv.second, "");
      }
    }
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorKind::kInvalidValue, "override '" + ov + "': expected key=value");
    }
    std::string key = ov.substr(0, eq);
    std::string section;
    if (const auto dot = key.find('.'); dot != std::string::npos) {
      section = key.substr(0, dot);
      key = key.substr(dot + 1);
    }
    YAML::Node value;
    try {
      value = YAML::Load(ov.substr(eq + 1));
    } catch (const YAML::Exception&) {
      throw Error(ErrorKind::kInvalidValue, key + ": cannot parse override value");
    }
    detail::apply(c, key, value, section);
  }
  c.exp.data.seed = c.resolved_data_seed();
  validate(c);
  return c;
}

inline RunConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingFile, "config file " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, overrides);
}

// Fully resolved config as YAML, keys in a fixed order.
inline std::string echo_config(const RunConfig& c) {
  using io::fmt_shortest;
  const auto& e = c.exp;
  const auto& t = e.train;
  YAML::Emitter out;
  auto dbl = [](double v) { return fmt_shortest(v); };
  out << YAML::BeginMap;
  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "design" << YAML::Value << design_name(e.data.design);
  out << YAML::Key << "n" << YAML::Value << e.data.n;
  out << YAML::Key << "sigma" << YAML::Value << dbl(e.data.sigma);
  out << YAML::Key << "x_max" << YAML::Value << dbl(e.data.x_max);
  out << YAML::Key << "data_seed" << YAML::Value << c.resolved_data_seed();
  if (e.data.design == Design::kCustomFile) {
    out << YAML::Key << "data_file" << YAML::Value << e.data.file;
    out << YAML::Key << "ground_truth" << YAML::Value
        << (e.data.ground_truth.empty() ? std::string("none") : e.data.ground_truth);
  }
  out << YAML::EndMap;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "k" << YAML::Value << t.k;
  out << YAML::Key << "eta" << YAML::Value << dbl(t.eta);
  out << YAML::Key << "max_steps" << YAML::Value << t.max_steps;
  out << YAML::Key << "log_every" << YAML::Value << t.log_every;
  out << YAML::Key << "spectrum_every" << YAML::Value << t.spectrum_every;
  out << YAML::Key << "seed" << YAML::Value << t.seed;
  out << YAML::Key << "init" << YAML::Value
      << (t.init.kind == InitScheme::Kind::kUniformFanin ? "uniform_fanin" : "uniform_custom");
  if (t.init.kind == InitScheme::Kind::kUniformCustom) {
    out << YAML::Key << "init_a_w1" << YAML::Value << dbl(t.init.a_w1);
    out << YAML::Key << "init_a_b1" << YAML::Value << dbl(t.init.a_b1);
    out << YAML::Key << "init_a_w2" << YAML::Value << dbl(t.init.a_w2);
  }
  out << YAML::Key << "stop_grad_norm" << YAML::Value << dbl(t.stop_grad_norm);
  out << YAML::Key << "steady_window" << YAML::Value << t.steady_window;
  out << YAML::Key << "steady_rel_tol" << YAML::Value << dbl(t.steady_rel_tol);
  out << YAML::Key << "beos_eps" << YAML::Value << dbl(t.beos_eps);
  out << YAML::Key << "diff_tol" << YAML::Value << dbl(t.diff_tol);
  out << YAML::EndMap;
  out << YAML::Key << "experiment" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "delta" << YAML::Value << dbl(e.delta);
  out << YAML::Key << "reps" << YAML::Value << e.reps;
  out << YAML::Key << "eta_grid" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double v : e.eta_grid) out << dbl(v);
  out << YAML::EndSeq;
  out << YAML::Key << "n_grid" << YAML::Value << YAML::Flow << e.n_grid;
  out << YAML::Key << "equal_time" << YAML::Value << e.equal_time;
  out << YAML::Key << "eta_exponent" << YAML::Value << dbl(e.eta_exponent);
  out << YAML::Key << "width_per_n" << YAML::Value << e.width_per_n;
  out << YAML::Key << "dslope_tol" << YAML::Value << dbl(e.dslope_tol);
  out << YAML::Key << "basis_points" << YAML::Value << e.basis_points;
  out << YAML::Key << "gap_samples" << YAML::Value << e.gap_samples;
  out << YAML::Key << "test_seed" << YAML::Value << c.test_seed;
  out << YAML::Key << "workers" << YAML::Value << e.workers;
  out << YAML::Key << "first_layer" << YAML::Value
      << (c.first_layer == FirstLayer::kStratified ? "stratified" : "init");
  if (!c.params_file.empty()) out << YAML::Key << "params_file" << YAML::Value << c.params_file;
  out << YAML::EndMap;
  out << YAML::Key << "interval" << YAML::Value << YAML::BeginMap;
  if (e.interval.fixed) {
    out << YAML::Key << "interval" << YAML::Value << YAML::Flow << YAML::BeginSeq
        << dbl(e.interval.fixed->lo) << dbl(e.interval.fixed->hi) << YAML::EndSeq;
  }
  out << YAML::Key << "interval_c" << YAML::Value << dbl(e.interval.c);
  out << YAML::Key << "interval_grid_step" << YAML::Value << dbl(e.interval.grid_step);
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace stablerelu::cli

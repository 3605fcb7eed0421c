// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vbpc/cli.hpp"
#include "vbpc/error.hpp"

namespace vbpc::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + v +
                      "' as a non-negative integer");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_uint(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty width list");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(TrainConfig&, const std::string& key, const std::string& v)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"rho", [](TrainConfig& c, auto& k, auto& v) { c.hyper.rho = parse_double(k, v); }},
      {"gamma", [](TrainConfig& c, auto& k, auto& v) { c.hyper.gamma = parse_double(k, v); }},
      {"beta_s",
       [](TrainConfig& c, auto& k, auto& v) {
         c.beta_s_auto = v == "auto";
         c.hyper.beta_s = c.beta_s_auto ? Hyperparams{}.beta_s : parse_double(k, v);
       }},
      {"beta_d", [](TrainConfig& c, auto& k, auto& v) { c.hyper.beta_d = parse_double(k, v); }},
      {"ipc", [](TrainConfig& c, auto& k, auto& v) { c.ipc = parse_uint(k, v); }},
      {"steps", [](TrainConfig& c, auto& k, auto& v) { c.steps = parse_uint(k, v); }},
      {"batch_size", [](TrainConfig& c, auto& k, auto& v) { c.batch_size = parse_uint(k, v); }},
      {"coreset_lr", [](TrainConfig& c, auto& k, auto& v) { c.coreset_lr = parse_double(k, v); }},
      {"pool_lr", [](TrainConfig& c, auto& k, auto& v) { c.pool_lr = parse_double(k, v); }},
      {"pool_size", [](TrainConfig& c, auto& k, auto& v) { c.pool_size = parse_uint(k, v); }},
      {"pool_period", [](TrainConfig& c, auto& k, auto& v) { c.pool_period = parse_uint(k, v); }},
      {"noise_sigma",
       [](TrainConfig& c, auto& k, auto& v) { c.noise_sigma = parse_double(k, v); }},
      {"noise_aug", [](TrainConfig& c, auto& k, auto& v) { c.noise_aug = parse_bool(k, v); }},
      {"learn_labels",
       [](TrainConfig& c, auto& k, auto& v) { c.learn_labels = parse_bool(k, v); }},
      {"random_init", [](TrainConfig& c, auto& k, auto& v) { c.random_init = parse_bool(k, v); }},
      {"arch", [](TrainConfig& c, auto& k, auto& v) { c.arch = parse_widths(k, v); }},
      {"seed_data", [](TrainConfig& c, auto& k, auto& v) { c.seed_data = parse_uint(k, v); }},
      {"seed_pool", [](TrainConfig& c, auto& k, auto& v) { c.seed_pool = parse_uint(k, v); }},
      {"seed_noise", [](TrainConfig& c, auto& k, auto& v) { c.seed_noise = parse_uint(k, v); }},
      {"seed_init", [](TrainConfig& c, auto& k, auto& v) { c.seed_init = parse_uint(k, v); }},
      {"log_every", [](TrainConfig& c, auto& k, auto& v) { c.log_every = parse_uint(k, v); }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : setters()) out.push_back(k);
    return out;
  }();
  return keys;
}

TrainConfig parse_config_text(const std::string& text, const std::string& origin) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      std::string valid;
      for (const auto& k : config_keys()) valid += (valid.empty() ? "" : ", ") + k;
      throw ConfigError(where + "unknown key '" + key + "'; valid keys: " + valid);
    }
    try {
      it->second(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

TrainConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::string format_config(const TrainConfig& c, std::optional<std::size_t> n_hat) {
  std::ostringstream out;
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "rho = " << fmt(c.hyper.rho) << "\n";
  out << "gamma = " << fmt(c.hyper.gamma) << "\n";
  if (c.beta_s_auto) {
    out << "beta_s = auto";
    if (n_hat) out << "  # resolves to n_hat = " << *n_hat;
    out << "\n";
  } else {
    out << "beta_s = " << fmt(c.hyper.beta_s) << "\n";
  }
  out << "beta_d = " << fmt(c.hyper.beta_d) << "\n";
  out << "ipc = " << c.ipc << "\n";
  out << "steps = " << c.steps << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "coreset_lr = " << fmt(c.coreset_lr) << "\n";
  out << "pool_lr = " << fmt(c.pool_lr) << "\n";
  out << "pool_size = " << c.pool_size << "\n";
  out << "pool_period = " << c.pool_period << "\n";
  out << "noise_sigma = " << fmt(c.noise_sigma) << "\n";
  out << "noise_aug = " << b(c.noise_aug) << "\n";
  out << "learn_labels = " << b(c.learn_labels) << "\n";
  out << "random_init = " << b(c.random_init) << "\n";
  out << "arch = ";
  for (std::size_t i = 0; i < c.arch.size(); ++i) out << (i ? "," : "") << c.arch[i];
  out << "\n";
  out << "seed_data = " << c.seed_data << "\n";
  out << "seed_pool = " << c.seed_pool << "\n";
  out << "seed_noise = " << c.seed_noise << "\n";
  out << "seed_init = " << c.seed_init << "\n";
  out << "log_every = " << c.log_every << "\n";
  return out.str();
}

DataSpec parse_data_spec(const std::string& text) {
  DataSpec spec;
  if (text.rfind("synthetic:", 0) == 0) {
    const std::string rest = text.substr(10);
    const auto colon = rest.find(':');
    spec.kind = parse_synthetic_kind(rest.substr(0, colon));
    spec.k = spec.kind == SyntheticKind::blobs ? 3 : 2;
    if (colon != std::string::npos) {
      std::stringstream ss(rest.substr(colon + 1));
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("data spec: expected key=value, got '" + item + "'");
        const std::string k = trim(item.substr(0, eq));
        const std::string v = trim(item.substr(eq + 1));
        if (k == "n") spec.n = parse_uint("n", v);
        else if (k == "k") spec.k = parse_uint("k", v);
        else if (k == "noise") spec.noise = parse_double("noise", v);
        else if (k == "seed") spec.seed = parse_uint("seed", v);
        else throw ConfigError("data spec: unknown parameter '" + k + "' (n, k, noise, seed)");
      }
    }
    return spec;
  }
  if (text.rfind("idx:", 0) == 0) {
    spec.synthetic = false;
    std::string rest = text.substr(4);
    std::string test;
    const auto semi = rest.find(';');
    if (semi != std::string::npos) {
      test = rest.substr(semi + 1);
      rest.resize(semi);
      if (test.rfind("test=", 0) != 0) throw ConfigError("data spec: expected ';test=<images>,<labels>'");
      test = test.substr(5);
    }
    auto split_pair = [](const std::string& s, std::filesystem::path& a, std::filesystem::path& b) {
      const auto comma = s.find(',');
      if (comma == std::string::npos) throw ConfigError("data spec: expected '<images>,<labels>', got '" + s + "'");
      a = s.substr(0, comma);
      b = s.substr(comma + 1);
    };
    split_pair(rest, spec.train_images, spec.train_labels);
    if (!test.empty()) split_pair(test, spec.test_images, spec.test_labels);
    return spec;
  }
  throw ConfigError("data spec must start with 'synthetic:' or 'idx:', got '" + text + "'");
}

Splits load_splits(const DataSpec& spec) {
  Splits s;
  if (spec.synthetic) {
    s.train = gen_synthetic(spec.kind, spec.n, spec.k, spec.noise, spec.seed);
    s.test = gen_synthetic(spec.kind, spec.n, spec.k, spec.noise, spec.seed + 1);
  } else {
    s.train = load_idx(spec.train_images, spec.train_labels);
    s.test = spec.test_images.empty() ? s.train : load_idx(spec.test_images, spec.test_labels);
    if (s.test.dim() != s.train.dim()) {
      throw ShapeError("test split has d = " + std::to_string(s.test.dim()) + ", train has " +
                       std::to_string(s.train.dim()));
    }
    s.test.k = s.train.k = std::max(s.train.k, s.test.k);
  }
  normalize(s.train);
  apply_stats(s.test, s.train.stats);
  return s;
}

}  // namespace vbpc::cli

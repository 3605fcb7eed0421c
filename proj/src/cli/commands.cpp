// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "vbpc/cli.hpp"
#include "vbpc/error.hpp"

namespace vbpc::cli {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// One JSON object per line, flushed so a crash keeps every finished record.
class JsonlSink : public MetricsSink {
 public:
  explicit JsonlSink(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw ConfigError("cannot write " + path.string());
  }
  void record(const MetricsRecord& r) override {
    Json j;
    j["step"] = r.step;
    j["loss"] = r.loss;
    j["lik"] = r.lik;
    j["kl"] = r.kl;
    j["lr"] = r.lr;
    j["ms"] = r.ms;
    out_ << j.dump() << '\n' << std::flush;
  }
  void abort(std::uint64_t step, const std::string& diagnostic) override {
    Json j;
    j["step"] = step;
    j["abort"] = diagnostic;
    out_ << j.dump() << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

Json stats_json(const NormStats& s) {
  Json j;
  j["mean"] = s.mean;
  j["std"] = s.std;
  return j;
}

NormStats stats_from_json(const Json& j) {
  NormStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  return s;
}

std::vector<std::size_t> parse_arch(const std::string& text) {
  return parse_config_text("arch = " + text, "--arch").arch;
}

struct TrainArgs {
  std::string config, data, out;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg = parse_config(a.config);
  if (a.seed) cfg.seed_data = cfg.seed_pool = cfg.seed_noise = cfg.seed_init = *a.seed;
  const Splits splits = load_splits(parse_data_spec(a.data));
  const fs::path out(a.out);
  fs::create_directories(out);
  write_text(out / "resolved-config.txt", format_config(cfg, cfg.ipc * splits.train.k));
  write_text(out / "norm-stats.json", stats_json(splits.train.stats).dump() + "\n");

  JsonlSink sink(out / "metrics.jsonl");
  try {
    const PseudoCoreset c = train(cfg, splits.train, sink);
    save_coreset(c, out / "coreset.vbpc");
  } catch (const NonFiniteError& e) {
    std::cerr << "vbpc train: aborted: " << e.what() << "\n";
    return kExitRuntime;
  }
  std::cout << (out / "coreset.vbpc").string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string coreset, data, arch = "32,32", init = "lecun", out;
  std::uint64_t tprime = EvalConfig{}.tprime;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  const PseudoCoreset c = load_coreset(a.coreset);
  const Splits splits = load_splits(parse_data_spec(a.data));
  EvalConfig ec;
  ec.arch = parse_arch(a.arch);
  ec.tprime = a.tprime;
  ec.seed = a.seed;
  ec.init = a.init == "zero" ? InitKind::zero : InitKind::lecun;
  const Metrics m = evaluate_coreset(c, splits.test, ec);
  Json j;
  j["acc"] = m.acc;
  j["nll"] = m.nll;
  if (!a.out.empty()) write_text(a.out, j.dump() + "\n");
  std::cout << j.dump() << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::size_t h = 0, nhat = 0, reps = 1, k = 10, batch = 256;
  std::string mode, out;
};

int cmd_bench(const BenchArgs& a) {
  const BenchMode mode = a.mode == "naive" ? BenchMode::naive : BenchMode::efficient;
  const BenchResult r = run_bench(mode, a.h, a.nhat, a.reps, a.k, a.batch);
  Json j;
  j["mode"] = a.mode;
  j["h"] = r.h;
  j["nhat"] = r.n_hat;
  j["k"] = r.k;
  j["batch"] = r.batch;
  j["reps"] = r.reps;
  j["peak_f64"] = r.peak_f64;
  j["largest_f64"] = r.largest_f64;
  j["ms_per_100"] = r.ms_per_100;
  j["loss"] = r.loss;
  if (!a.out.empty()) write_text(a.out, j.dump() + "\n");
  std::cout << j.dump() << "\n";
  return kExitOk;
}

struct ExportArgs {
  std::string coreset, out, data;
};

int cmd_export(const ExportArgs& a) {
  const PseudoCoreset c = load_coreset(a.coreset);
  NormStats stats = NormStats::identity(c.images.cols());
  const fs::path sidecar = fs::path(a.coreset).parent_path() / "norm-stats.json";
  if (!a.data.empty()) {
    stats = load_splits(parse_data_spec(a.data)).train.stats;
  } else if (fs::exists(sidecar)) {
    std::ifstream in(sidecar);
    stats = stats_from_json(Json::parse(in));
  }
  const std::size_t n = export_coreset(c, stats, a.out);
  std::cout << n << " file(s) written to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Variational Bayesian pseudo-coreset learning", "vbpc"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Learn a coreset");
  train_cmd->add_option("--config", ta.config, "key = value config file")->required();
  train_cmd->add_option("--data", ta.data, "data spec")->required();
  train_cmd->add_option("--out", ta.out, "output directory")->required();
  train_cmd->add_option("--seed", ta.seed, "override every seed");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a coreset with single-pass BMA");
  eval_cmd->add_option("--coreset", ea.coreset, "coreset file")->required();
  eval_cmd->add_option("--data", ea.data, "data spec")->required();
  eval_cmd->add_option("--tprime", ea.tprime, "feature-net training steps")->capture_default_str();
  eval_cmd->add_option("--seed", ea.seed, "net init seed");
  eval_cmd->add_option("--arch", ea.arch, "hidden widths, e.g. 32,32");
  eval_cmd->add_option("--init", ea.init, "lecun or zero")
      ->check(CLI::IsMember({"lecun", "zero"}));
  eval_cmd->add_option("--out", ea.out, "write the JSON result here too");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Time naive vs efficient loss evaluation");
  // --h is the feature dimension here, so help is long-form only.
  bench_cmd->set_help_flag("--help", "Print this help message and exit");
  bench_cmd->add_option("--h", ba.h, "feature dimension")->required();
  bench_cmd->add_option("--nhat", ba.nhat, "coreset size")->required();
  bench_cmd->add_option("--mode", ba.mode, "naive or efficient")
      ->required()
      ->check(CLI::IsMember({"naive", "efficient"}));
  bench_cmd->add_option("--reps", ba.reps, "evaluations to time");
  bench_cmd->add_option("--k", ba.k, "classes");
  bench_cmd->add_option("--batch", ba.batch, "batch size");
  bench_cmd->add_option("--out", ba.out, "write the JSON result here too");

  ExportArgs xa;
  auto* export_cmd = app.add_subcommand("export-images", "Write coreset rows as PGM or CSV");
  export_cmd->add_option("--coreset", xa.coreset, "coreset file")->required();
  export_cmd->add_option("--out", xa.out, "output directory")->required();
  export_cmd->add_option("--data", xa.data, "data spec to recover normalization stats");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(ea);
    if (*bench_cmd) return cmd_bench(ba);
    if (*export_cmd) return cmd_export(xa);
  } catch (const ConfigError& e) {
    std::cerr << "vbpc: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "vbpc: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "vbpc: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "vbpc: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"vbpc"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace vbpc::cli

// peergrade: fit, compare, score and simulate peer-grading models from the command line.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "peergrade/comparison.hpp"
#include "peergrade/dataset.hpp"
#include "peergrade/error.hpp"
#include "peergrade/fit_io.hpp"
#include "peergrade/posterior.hpp"
#include "peergrade/simulation.hpp"

namespace fs = std::filesystem;
using namespace peergrade;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kFlagged = 2;

struct Options {
  std::string data;
  std::string meta;
  std::string model;
  std::string sampler;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> fits;
  std::string fit_dir;
};

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::DataSchema, path + ": " + e.what());
  }
}

// --model accepts a JSON file or a bare variant name.
ModelSpec load_model(const std::string& arg) {
  if (fs::exists(arg)) return model_spec_from_json(read_json(arg));
  ModelSpec spec;
  spec.variant = variant_from_string(arg);
  return spec;
}

SamplerConfig load_sampler(const Options& o) {
  SamplerConfig c = o.sampler.empty() ? SamplerConfig{} : sampler_config_from_json(read_json(o.sampler));
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

int cmd_fit(const Options& o) {
  Scale scale = o.meta.empty() ? Scale::unbounded() : read_scale_json(o.meta);
  PeerGradingDataset data = validate_dataset(read_grades_csv(o.data), scale);
  ModelSpec spec = load_model(o.model);
  SamplerConfig sampler = load_sampler(o);

  fs::create_directories(o.out);
  RunManifest manifest = make_manifest("fit", spec, sampler, data);
  write_manifest(o.out, manifest);

  FitResult fit = fit_model(spec, data, sampler);
  manifest.files = write_fit_outputs(o.out, fit, data, manifest);
  manifest.files.push_back("manifest.json");
  for (const auto& c : fit.run.chains) manifest.chain_seconds.push_back(c.warmup_seconds + c.sampling_seconds);

  std::vector<std::string> flagged = fit.flagged();
  manifest.status = flagged.empty() ? "ok" : "flagged";
  write_manifest(o.out, manifest);
  if (!flagged.empty()) {
    std::cerr << nlohmann::json{{"status", "flagged"}, {"flagged", flagged}}.dump() << "\n";
    return kFlagged;
  }
  return kOk;
}

int cmd_compare(const Options& o) {
  if (o.fits.size() < 2) throw Error(ErrorCode::InvalidConfig, "compare needs at least two fit directories");
  std::vector<ModelPredictive> models;
  std::string hash;
  for (const auto& dir : o.fits) {
    RunManifest m = read_manifest(dir);
    if (hash.empty()) hash = m.data_hash;
    if (m.data_hash != hash) {
      throw Error(ErrorCode::DataHashMismatch,
                  dir + " was fitted to data " + m.data_hash + ", expected " + hash);
    }
    std::string name = m.variant;
    for (const auto& prior : models) {
      if (prior.name == name) name = m.variant + "@" + fs::path(dir).filename().string();
    }
    models.push_back(predictive_summary(name, read_pointwise_csv(fs::path(dir) / "pointwise_loglik.csv"), m.data_hash));
  }
  ComparisonReport report = compare(models);
  if (o.out.empty()) {
    std::cout << report.to_csv();
    return kOk;
  }
  fs::create_directories(o.out);
  write_text(fs::path(o.out) / "comparison.csv", report.to_csv());
  write_text(fs::path(o.out) / "comparison.json", report.to_json().dump(2) + "\n");
  write_text(fs::path(o.out) / "pareto_k.csv", pareto_k_csv(models));
  return kOk;
}

int cmd_score(const Options& o) {
  RunManifest m = read_manifest(o.fit_dir);
  std::string csv = "# manifest: " + m.id + "\n" + score_fit_dir(o.fit_dir);
  fs::path out = o.out.empty() ? fs::path(o.fit_dir) : fs::path(o.out);
  fs::create_directories(out);
  write_text(out / "scores.csv", csv);
  return kOk;
}

int cmd_simulate(const Options& o) {
  GeneratorConfig config = generator_config_from_json(read_json(o.config));
  if (o.seed) config.seed = *o.seed;
  SimulatedData sim = generate(config);
  fs::create_directories(o.out);
  std::ostringstream data;
  write_grades_csv(data, sim.data);
  write_text(fs::path(o.out) / "data.csv", data.str());
  write_text(fs::path(o.out) / "truth.csv", truth_csv(config, sim.truth));
  write_text(fs::path(o.out) / "meta.json", scale_to_json(sim.data.scale()).dump(2) + "\n");
  write_text(fs::path(o.out) / "generator.json", generator_config_to_json(config).dump(2) + "\n");
  return kOk;
}

std::string replication_dir(int r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "rep%03d", r + 1);
  return buf;
}

int cmd_recover(const Options& o) {
  nlohmann::json experiment = read_json(o.config);
  if (o.seed) experiment["seed"] = *o.seed;
  std::vector<RecoveryConfig> configs = recovery_configs_from_json(experiment);
  fs::create_directories(o.out);

  std::vector<std::pair<std::string, RecoveryAggregate>> rows;
  bool any_failed = false;
  for (auto& config : configs) {
    if (o.threads) config.sampler.threads = *o.threads;
    std::string label = config.label.empty() ? "default" : config.label;
    fs::path base = configs.size() > 1 ? fs::path(o.out) / label : fs::path(o.out);
    std::vector<RecoveryReport> reports;
    for (int r = 0; r < config.replications; ++r) {
      RecoveryReport report = run_replication(config, r);
      std::cerr << nlohmann::json{{"scenario", label}, {"replication", r + 1}, {"ok", report.ok},
                                  {"rmse_model", report.rmse_model}, {"converged", report.converged},
                                  {"seconds", report.seconds}}
                       .dump()
                << "\n";
      fs::create_directories(base / replication_dir(r));
      write_text(base / replication_dir(r) / "recovery_report.csv", recovery_report_csv(report));
      if (!report.ok) {
        any_failed = true;
        write_text(base / replication_dir(r) / "error.json",
                   nlohmann::json{{"error", report.error}}.dump(2) + "\n");
      }
      reports.push_back(std::move(report));
    }
    rows.emplace_back(label, aggregate(reports));
  }
  write_text(fs::path(o.out) / "aggregate.csv", aggregate_csv(rows));
  return any_failed ? kError : kOk;
}

void report_error(std::string_view code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian peer-grading models: fit, compare, score, simulate"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", o.seed, "Base seed for all randomness");
    cmd->add_option("--threads", o.threads, "Worker threads (0: hardware concurrency)")->check(CLI::NonNegativeNumber);
  };

  auto* fit = app.add_subcommand("fit", "Fit a model and write draws, summaries and diagnostics");
  fit->add_option("--data", o.data, "Grades CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--meta", o.meta, "Scale metadata JSON")->check(CLI::ExistingFile);
  fit->add_option("--model", o.model, "Model JSON or variant name")->required();
  fit->add_option("--sampler", o.sampler, "Sampler JSON")->check(CLI::ExistingFile);
  fit->add_option("--out", o.out, "Output directory")->required();
  add_common(fit);

  auto* cmp = app.add_subcommand("compare", "Rank fits by PSIS-LOO");
  cmp->add_option("fits", o.fits, "Fit output directories")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--out", o.out, "Output directory (default: CSV on stdout)");

  auto* score = app.add_subcommand("score", "Write per-student score estimates of a fit");
  score->add_option("fit", o.fit_dir, "Fit output directory")->required()->check(CLI::ExistingDirectory);
  score->add_option("--out", o.out, "Output directory (default: the fit directory)");

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset with its truth");
  sim->add_option("--config", o.config, "Generator JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", o.out, "Output directory")->required();
  add_common(sim);

  auto* rec = app.add_subcommand("recover", "Run a parameter-recovery experiment");
  rec->add_option("--config", o.config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  rec->add_option("--out", o.out, "Output directory")->required();
  add_common(rec);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("USAGE", e.what());
    return kError;
  }

  try {
    if (*fit) return cmd_fit(o);
    if (*cmp) return cmd_compare(o);
    if (*score) return cmd_score(o);
    if (*sim) return cmd_simulate(o);
    if (*rec) return cmd_recover(o);
  } catch (const Error& e) {
    report_error(to_string(e.code()), e.what());
    return kError;
  } catch (const std::exception& e) {
    report_error("INTERNAL", e.what());
    return kError;
  }
  return kError;
}

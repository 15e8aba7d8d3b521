#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "peergrade/dataset.hpp"
#include "peergrade/diagnostics.hpp"
#include "peergrade/posterior.hpp"

namespace peergrade {

/// Provenance of one fit. Written before sampling (status "running") and finalized after.
struct RunManifest {
  std::string id;
  std::string version;
  std::string status = "running";
  std::string command;
  std::string variant;
  std::string data_hash;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json model;
  nlohmann::json sampler;
  nlohmann::json scale;
  std::vector<double> chain_seconds;
  std::vector<std::string> files;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

std::string library_version();

/// Hex FNV-1a digest of a string.
std::string hex_digest(std::string_view text);

/// Deterministic manifest id from the data hash and the canonical configs.
RunManifest make_manifest(const std::string& command, const ModelSpec& spec,
                          const SamplerConfig& sampler, const PeerGradingDataset& data);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& dir);

/// Writes draws.csv, summary.csv, diagnostics.json, pointwise_loglik.csv, sampler_stats.csv and
/// layout.json; returns the names written. CSV files start with a "# manifest: <id>" comment.
std::vector<std::string> write_fit_outputs(const std::filesystem::path& dir, const FitResult& fit,
                                           const PeerGradingDataset& data,
                                           const RunManifest& manifest);

/// Summary rows for structural and per-student quantities.
std::string summary_csv(const std::vector<ParameterSummary>& rows);

/// Reads a CSV whose first two columns are chain and iteration (1-based) into a draw table.
DrawTable read_draws_csv(const std::filesystem::path& path);

/// Reads pointwise_loglik.csv into an S x n matrix (chain-major rows).
Eigen::MatrixXd read_pointwise_csv(const std::filesystem::path& path);

/// Per-work true scores and per-student bias and reliability from the draws of a fit:
/// `kind,student,assessment,mean,q2.5,q97.5,prior_only`. Works that received no grades are
/// reported with prior_only = 1. `layout` is the layout.json of the fit.
std::string scores_csv(const DrawTable& draws, const nlohmann::json& layout);

/// Reads draws.csv and layout.json from a fit directory and returns scores_csv().
std::string score_fit_dir(const std::filesystem::path& dir);

/// Diagnostics JSON of a fit (flags, divergences, adaptation results, timings).
nlohmann::json diagnostics_json(const FitResult& fit);

}  // namespace peergrade

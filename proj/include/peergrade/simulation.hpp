#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "peergrade/dataset.hpp"
#include "peergrade/model_spec.hpp"
#include "peergrade/parameter_space.hpp"
#include "peergrade/sampler.hpp"

namespace peergrade {

/// Generating design and true structural values.
///
/// `mu`, `sigma` and `omega` are indexed by the latent roles of `variant` (see VariantTraits);
/// entries of `mu` for fixed-mean roles are used as given. When `delta` is empty the
/// difficulties are drawn from N(delta_mean, delta_sd^2) (ordinal: T x (K-1) thresholds,
/// sorted within each assessment).
struct GeneratorConfig {
  Variant variant = Variant::M4;
  int num_students = 100;
  int num_assessments = 4;
  int graders_per_work = 3;
  Eigen::VectorXd delta;
  double delta_mean = 0.0;
  double delta_sd = 1.0;
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd omega;
  double phi = 1.0;  // common residual sd (M1, M2s)
  PiechParams piech;
  int categories = 0;  // ordinal K
  std::vector<double> time_codes;
  std::optional<std::pair<double, double>> clip;  // off by default
  std::uint64_t seed = 1;

  void validate() const;
};

/// Fills defaults for a variant: mu = 0, sigma = 1, omega = I.
GeneratorConfig default_generator(Variant variant, int num_students, int num_assessments,
                                  int graders_per_work);

GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json generator_config_to_json(const GeneratorConfig& c);

struct Truth {
  StructuralParams structural;
  Eigen::MatrixXd x;           // N x D student latents
  Eigen::MatrixXd theta;       // N x T
  Eigen::VectorXd bias;        // beta_g
  Eigen::VectorXd phi2;        // grader residual variance
  Eigen::MatrixXd true_score;  // theta_it - delta_t (ordinal: minus mean threshold)
};

struct SimulatedData {
  PeerGradingDataset data;
  Truth truth;
};

/// S_it for every work: a uniform m-subset of the other students, independent across works.
AssignmentIndex assign_graders(int num_students, int num_assessments, int graders_per_work,
                               std::mt19937_64& rng);

SimulatedData generate(const GeneratorConfig& config);

/// Zero-padded ids so that lexicographic and numeric order agree.
std::string student_id(int index, int num_students);
std::string assessment_id(int index, int num_assessments);

/// Writes truth.csv rows: quantity,index,value.
std::string truth_csv(const GeneratorConfig& config, const Truth& truth);

struct RecoveryConfig {
  GeneratorConfig generator;
  ModelSpec fit;
  SamplerConfig sampler;
  int replications = 1;
  std::uint64_t seed = 1;
  std::string label;
};

RecoveryConfig recovery_config_from_json(const nlohmann::json& j);

struct ParameterRecovery {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool covered = false;
};

struct RecoveryReport {
  int replication = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<ParameterRecovery> parameters;
  double coverage = 0.0;
  double rmse_model = 0.0;
  double mae_model = 0.0;
  double rmse_mean_baseline = 0.0;
  double mae_mean_baseline = 0.0;
  double max_rhat = 0.0;
  double min_ess_ratio = 0.0;
  bool converged = false;
  double divergent_fraction = 0.0;
  double seconds = 0.0;
  // Stacked S x n pointwise log-likelihood, filled only when requested.
  Eigen::MatrixXd pointwise_loglik;
};

struct RecoveryAggregate {
  int replications = 0;
  int succeeded = 0;
  double coverage = 0.0;
  double rmse_model = 0.0;
  double mae_model = 0.0;
  double rmse_mean_baseline = 0.0;
  double mae_mean_baseline = 0.0;
  int model_beats_baseline = 0;
  int converged = 0;
};

/// Per-replication seed derived from (base seed, replication index).
std::uint64_t replication_seed(std::uint64_t base, int replication);

/// Fits `config.fit` to one dataset and scores it against the truth.
RecoveryReport score_fit(const RecoveryConfig& config, const SimulatedData& sim, int replication,
                         bool keep_pointwise = false);

/// Generates, fits and scores one replication; failures are recorded, not thrown.
RecoveryReport run_replication(const RecoveryConfig& config, int replication,
                               bool keep_pointwise = false);

std::vector<RecoveryReport> recovery_experiment(const RecoveryConfig& config);

/// Experiment file: either one experiment or a shared base plus a "scenarios" array whose
/// entries override base keys (same generated datasets across scenarios).
std::vector<RecoveryConfig> recovery_configs_from_json(const nlohmann::json& j);

RecoveryAggregate aggregate(const std::vector<RecoveryReport>& reports);

std::string recovery_report_csv(const RecoveryReport& report);
std::string aggregate_csv(const std::vector<std::pair<std::string, RecoveryAggregate>>& rows);

}  // namespace peergrade

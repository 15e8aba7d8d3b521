#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "peergrade/dataset.hpp"
#include "peergrade/diagnostics.hpp"
#include "peergrade/model_spec.hpp"
#include "peergrade/parameter_space.hpp"
#include "peergrade/sampler.hpp"

namespace peergrade {

/// Names of the structural (population-level) quantities of a layout, e.g. "delta[2]",
/// "sigma[beta]", "omega[alpha,beta]", "phi", "gamma1".
std::vector<std::string> structural_names(const ParameterLayout& layout);

/// Structural quantities at one constrained point, ordered as structural_names().
Eigen::VectorXd structural_values(const ParameterLayout& layout, const StructuralParams& s);

/// Per-student derived quantities: true scores "score[i,t]" (theta_it - delta_t, ordinal:
/// theta_it minus the mean threshold of t), grader bias "bias[i]" and reliability "phi[i]"
/// (residual sd). Indices are 1-based dense positions.
std::vector<std::string> student_names(const ParameterLayout& layout);
Eigen::VectorXd student_values(const ParameterLayout& layout, const StructuralParams& s,
                               const LatentParams& latents);

/// Constrained draws of every chain.
DrawTable structural_draws(const ParameterLayout& layout, const SamplerRun& run);
DrawTable student_draws(const ParameterLayout& layout, const SamplerRun& run);

/// Pointwise log-likelihood of all chains stacked chain-major (S x n).
Eigen::MatrixXd stacked_pointwise(const SamplerRun& run);

struct Interval {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

Interval posterior_interval(const Eigen::VectorXd& draws, double level = 0.95);

/// Posterior mean and 95% quantile interval of theta_it - delta_t (0-based indices).
Interval true_score_estimate(const DrawTable& students, int student, int assessment);

struct VarianceShare {
  Interval share;
  Eigen::VectorXd per_draw;
};

/// Grader share V_G / (V_E + V_G) per draw with V_E = sigma_alpha^2 + mean eta_i^2 and
/// V_G = sigma_beta^2 + mean phi_g^2.
VarianceShare variance_decomposition(const ParameterLayout& layout, const SamplerRun& run);

/// Same functional at one constrained point.
double grader_variance_share(const ParameterLayout& layout, const StructuralParams& s,
                             const LatentParams& latents);

struct FitResult {
  ParameterLayout layout;
  SamplerRun run;
  DrawTable structural;
  std::vector<ParameterSummary> structural_summary;

  /// Structural quantities with rhat >= 1.01, ess_ratio <= 0.10 or degenerate diagnostics.
  std::vector<std::string> flagged() const;
  bool converged() const { return flagged().empty(); }
};

/// Validates the spec against the data, samples, and summarizes structural quantities.
FitResult fit_model(const ModelSpec& spec, const PeerGradingDataset& data,
                    const SamplerConfig& config, bool keep_pointwise = true);

}  // namespace peergrade

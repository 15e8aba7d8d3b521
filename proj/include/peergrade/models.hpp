#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "peergrade/dataset.hpp"
#include "peergrade/parameter_space.hpp"

namespace peergrade {

struct LogDensityResult {
  double log_posterior = 0.0;
  double log_prior = 0.0;
  double log_likelihood = 0.0;
  double log_jacobian = 0.0;
  Eigen::VectorXd gradient;
  Eigen::VectorXd pointwise_loglik;  // dataset observation order
};

/// Conditional log density of each observed grade given the latents.
Eigen::VectorXd log_likelihood_pointwise(const ParameterLayout& layout,
                                         const StructuralParams& structural,
                                         const LatentParams& latents,
                                         const PeerGradingDataset& data);

/// Log prior of the constrained parameters, including the standard-normal density of the
/// non-centered deviates. Returns -inf when a Piech precision is not positive.
double log_prior(const ParameterLayout& layout, const StructuralParams& structural,
                 const LatentParams& latents);

/// Log normalizing-constant-inclusive LKJ density of a correlation matrix given its Cholesky factor.
double lkj_log_density(const Eigen::MatrixXd& chol, double shape);

/// Partial credit category probabilities P(Y = 1..K).
Eigen::VectorXd pcm_probs(double theta, double beta, double phi, std::span<const double> thresholds);

/// Log posterior on the unconstrained space, bound to one layout and dataset.
///
/// Evaluation is reentrant; the object holds only immutable indexing data.
class PosteriorDensity {
 public:
  PosteriorDensity(ParameterLayout layout, const PeerGradingDataset& data);

  int dim() const { return layout_.total_dim; }
  int num_observations() const { return static_cast<int>(edges_.size()); }
  const ParameterLayout& layout() const { return layout_; }

  /// Log posterior with gradient. Piech precision violations give -inf and a zero gradient.
  double operator()(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const;

  /// Log posterior without gradient.
  double log_density(const Eigen::VectorXd& u) const;

  LogDensityResult evaluate(const Eigen::VectorXd& u) const;
  Eigen::VectorXd pointwise(const Eigen::VectorXd& u) const;

 private:
  struct Terms {
    double prior = 0.0;
    double likelihood = 0.0;
    double jacobian = 0.0;
  };

  double compute(const Eigen::VectorXd& u, double* grad, double* pointwise, Terms* terms) const;
  double compute_latent_model(const Eigen::VectorXd& u, double* grad, double* pointwise,
                              Terms& terms) const;
  double compute_piech(const Eigen::VectorXd& u, double* grad, double* pointwise,
                       Terms& terms) const;

  ParameterLayout layout_;
  std::vector<Edge> edges_;
  std::vector<double> time_codes_;
};

LogDensityResult log_posterior_with_gradient(const ParameterLayout& layout,
                                             const Eigen::VectorXd& u,
                                             const PeerGradingDataset& data);

/// Checks that a dataset fits a layout (shape, scale, grade categories).
void check_dataset_matches(const ParameterLayout& layout, const PeerGradingDataset& data);

}  // namespace peergrade

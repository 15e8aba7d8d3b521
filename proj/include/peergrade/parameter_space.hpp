#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "peergrade/model_spec.hpp"

namespace peergrade {

enum class Transform { Identity, LogExp, CholeskyCorr };

std::string_view to_string(Transform t);

struct Block {
  std::string name;
  int offset = 0;
  int length = 0;
  Transform transform = Transform::Identity;
  int corr_dim = 0;          // CholeskyCorr only
  std::vector<int> members;  // latent coordinates covered by a CholeskyCorr block
};

/// Flat unconstrained sampling space of one variant on one dataset shape.
///
/// Block order: delta, mu, log_sigma, correlation block(s), gamma, z, then variant extras
/// (common residual `log_phi`; Piech model `mu0`, `log_gamma0`, `gamma1`, `log_gamma2`,
/// `log_gamma3`). Blocks of length zero are omitted.
struct ParameterLayout {
  ModelSpec spec;
  int num_students = 0;
  int num_assessments = 0;
  int num_categories = 0;
  std::vector<Block> blocks;
  int total_dim = 0;

  const Block* find(std::string_view name) const;
  const Block& block(std::string_view name) const;
  int latent_dim() const { return spec.traits().latent_dim(); }
  int delta_width() const { return num_categories > 0 ? num_categories - 1 : 1; }

  nlohmann::json to_json() const;
};

ParameterLayout layout_for(const ModelSpec& spec, int num_students, int num_assessments,
                           int num_categories = 0);

struct PiechParams {
  double mu0 = 0.0;
  double gamma0 = 1.0;
  double gamma1 = 0.0;
  double gamma2 = 1.0;
  double gamma3 = 1.0;
};

struct StructuralParams {
  Eigen::VectorXd delta;      // T entries, or T x (K-1) thresholds row-major
  Eigen::VectorXd mu;         // latent means, fixed entries are 0
  Eigen::VectorXd sigma;      // latent standard deviations
  Eigen::MatrixXd chol_corr;  // block-diagonal lower Cholesky factor of Omega
  double phi = 1.0;           // common residual sd (M1, M2s)
  PiechParams piech;

  Eigen::MatrixXd correlation() const { return chol_corr * chol_corr.transpose(); }
};

struct LatentParams {
  Eigen::MatrixXd gamma;  // N x D standardized student deviates
  Eigen::MatrixXd z;      // N x T standardized true-score deviates (empty when unused)
};

struct ConstrainedParams {
  StructuralParams structural;
  LatentParams latents;
  double log_jacobian = 0.0;
};

/// Maps u to constrained parameters. The log-Jacobian covers every exp-transformed scale and,
/// for correlation blocks, the map to the free entries of Omega.
ConstrainedParams constrain(const ParameterLayout& layout, const Eigen::VectorXd& u);

Eigen::VectorXd unconstrain(const ParameterLayout& layout, const StructuralParams& structural,
                            const LatentParams& latents);

/// Per-student latents on the model scale.
struct StudentLatents {
  Eigen::MatrixXd x;      // N x D: mu + S L gamma_i (Piech: columns theta_i, beta_i)
  Eigen::MatrixXd theta;  // N x T true scores theta_it
  Eigen::VectorXd bias;   // beta_g (zero when the variant has none)
  Eigen::VectorXd phi2;   // grader residual variance; Piech: 1 / precision (may be <= 0)
};

StudentLatents assemble_student_latents(const ParameterLayout& layout,
                                        const StructuralParams& structural,
                                        const LatentParams& latents);

}  // namespace peergrade

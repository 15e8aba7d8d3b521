#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace peergrade {

enum class Variant {
  M1, M2, M3, M4,
  M1s, M2s, M3s, M4s,
  PM, PMs,
  LGC_LIN, LGC_QUAD,
  PCM_ORD,
};

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view name);
const std::vector<Variant>& all_variants();

/// Meaning of one coordinate of a student's latent vector.
enum class LatentRole { Ability, Slope, Curvature, Bias, LogEta2, LogPhi2 };

std::string_view to_string(LatentRole role);

/// Structural description of a variant.
///
/// Student i carries x_i = mu + S L gamma_i with roles `latents`; `corr_groups` partitions the
/// latent coordinates into blocks sharing a correlation matrix (singletons are independent).
struct VariantTraits {
  std::vector<LatentRole> latents;
  std::vector<bool> free_mean;
  std::vector<std::vector<int>> corr_groups;
  bool per_assessment_scores = false;  // theta_it = trajectory + eta_i z_it
  bool common_phi = false;             // single residual sd for all graders
  bool single_assessment = false;
  bool ordinal = false;
  bool piech = false;
  int min_assessments = 1;

  int latent_dim() const { return static_cast<int>(latents.size()); }
  int role_index(LatentRole role) const;  // -1 when absent
  bool has(LatentRole role) const { return role_index(role) >= 0; }
};

const VariantTraits& traits(Variant v);

struct NormalPrior {
  double loc = 0.0;
  double sd = 5.0;
};

/// Prior on positive scale parameters (standard deviations, Piech precisions).
struct ScalePrior {
  enum class Family { HalfCauchy, InvGamma, Exponential };
  Family family = Family::HalfCauchy;
  double a = 5.0;  // half-Cauchy scale | inverse-gamma shape | exponential rate
  double b = 0.0;  // inverse-gamma scale

  static ScalePrior half_cauchy(double scale) { return {Family::HalfCauchy, scale, 0.0}; }
  static ScalePrior inv_gamma(double shape, double scale) { return {Family::InvGamma, shape, scale}; }
  static ScalePrior exponential(double rate) { return {Family::Exponential, rate, 0.0}; }

  double log_density(double x) const;
  /// d/dx log_density(x).
  double dlog_density(double x) const;
};

struct PriorConfig {
  NormalPrior delta{0.0, 5.0};
  NormalPrior mu{0.0, 5.0};
  ScalePrior scale = ScalePrior::half_cauchy(5.0);
  double lkj_shape = 1.0;

  void validate() const;
};

struct ModelSpec {
  Variant variant = Variant::M4;
  PriorConfig priors;
  std::vector<double> time_codes;  // lambda_t, LGC only; empty means t - 1
  int categories = 0;              // K, PCM_ORD only

  const VariantTraits& traits() const { return peergrade::traits(variant); }

  /// Throws UnsupportedCombination when the variant cannot be fitted with T assessments.
  void check_compatible(int num_assessments, int num_categories = 0) const;

  /// Time codes resolved against T (default lambda_t = t - 1).
  std::vector<double> resolved_time_codes(int num_assessments) const;
};

ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json model_spec_to_json(const ModelSpec& spec);

}  // namespace peergrade

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace peergrade {

/// Pointwise log-likelihood matrices are S x n: rows are draws, columns observations.

struct WaicResult {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
  double se_waic = 0.0;
  Eigen::VectorXd pointwise_lppd;
  Eigen::VectorXd pointwise_p_waic;
};

WaicResult waic(const Eigen::MatrixXd& pll);

struct GpdFit {
  double k = 0.0;
  double sigma = 0.0;
};

/// Generalized Pareto fit to positive exceedances (Zhang-Stephens profile estimator with the
/// weakly informative adjustment of k toward 0.5).
GpdFit gpd_fit(std::vector<double> exceedances, bool adjust_k = true);

/// GPD quantile function.
double gpd_quantile(double p, double k, double sigma);

struct SmoothedWeights {
  Eigen::VectorXd log_weights;  // normalized: logsumexp = 0
  double pareto_k = 0.0;
  bool k_valid = true;          // false when the tail is degenerate or too short to fit
};

/// Pareto-smoothed importance weights from raw log importance ratios.
SmoothedWeights psis_smooth(const Eigen::VectorXd& log_ratios);

struct LooResult {
  double elpd_loo = 0.0;
  double se = 0.0;
  double p_loo = 0.0;
  double lppd = 0.0;
  Eigen::VectorXd pointwise_elpd;
  Eigen::VectorXd pareto_k;  // NaN where not applicable
  std::vector<bool> k_valid;

  int count_k_above(double threshold) const;
};

LooResult psis_loo(const Eigen::MatrixXd& pll);

/// One fitted model's predictive summaries.
struct ModelPredictive {
  std::string name;
  std::string data_hash;  // optional; compared when nonempty
  LooResult loo;
  WaicResult waic;
};

ModelPredictive predictive_summary(std::string name, const Eigen::MatrixXd& pll,
                                   std::string data_hash = {});

struct ComparisonRow {
  std::string model;
  double elpd_loo = 0.0;
  double se = 0.0;
  double p_loo = 0.0;
  double delta_elpd = 0.0;
  double se_delta = 0.0;
  double waic = 0.0;
  double p_waic = 0.0;
  int high_k = 0;  // observations with k > 0.7
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;  // descending elpd_loo

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

ComparisonReport compare(const std::vector<ModelPredictive>& models);

/// Per-observation k table: observation, one column per model.
std::string pareto_k_csv(const std::vector<ModelPredictive>& models);

}  // namespace peergrade

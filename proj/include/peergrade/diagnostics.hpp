#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "peergrade/error.hpp"

namespace peergrade {

/// Draws of named scalar quantities. Rows are draws ordered chain-major
/// (chain 0 draws 0..n-1, chain 1 draws 0..n-1, ...), columns are quantities.
struct DrawTable {
  std::vector<std::string> names;
  int chains = 0;
  int draws_per_chain = 0;
  Eigen::MatrixXd values;

  int column(const std::string& name) const;  // -1 when absent
  /// draws_per_chain x chains view of one column.
  Eigen::MatrixXd by_chain(int col) const;
  /// Appends another table with identical chain layout.
  void append(const DrawTable& other);
};

/// Value of a convergence diagnostic. Degenerate inputs carry a finite sentinel and a flag.
struct Diagnostic {
  double value = 1.0;
  std::optional<ErrorCode> flag;

  bool ok() const { return !flag.has_value(); }
};

/// Split-chain potential scale reduction. Columns of `draws` are chains.
Diagnostic split_rhat(const Eigen::MatrixXd& draws);

/// Effective sample size of the raw draws (split chains, Geyer initial monotone sequence).
Diagnostic ess_basic(const Eigen::MatrixXd& draws);

/// Rank-normalized bulk effective sample size.
Diagnostic ess_bulk(const Eigen::MatrixXd& draws);

/// Empirical quantile, linear interpolation between order statistics (type 7).
double quantile(std::vector<double> values, double prob);

/// Standard normal quantile function.
double normal_quantile(double p);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double rhat = 1.0;
  double ess_bulk = 0.0;
  double ess_ratio = 0.0;
  double mcse_mean = 0.0;
  bool degenerate = false;  // rhat/ESS undefined for these draws; sentinels reported
};

ParameterSummary summarize_column(const DrawTable& table, int col);
std::vector<ParameterSummary> summarize(const DrawTable& table);

nlohmann::json summary_to_json(const ParameterSummary& s);

}  // namespace peergrade

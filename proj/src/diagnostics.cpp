#include "peergrade/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

namespace peergrade {

namespace {

// Splits every chain into two halves, dropping the middle draw of odd-length chains.
Eigen::MatrixXd split_chains(const Eigen::MatrixXd& draws) {
  const Eigen::Index n = draws.rows() / 2;
  const Eigen::Index offset = draws.rows() - n;
  Eigen::MatrixXd out(n, 2 * draws.cols());
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    out.col(2 * c) = draws.col(c).head(n);
    out.col(2 * c + 1) = draws.col(c).segment(offset, n);
  }
  return out;
}

bool is_constant(const Eigen::MatrixXd& draws) {
  if (draws.size() == 0) return true;
  const double first = draws(0, 0);
  return (draws.array() == first).all();
}

double ess_of(const Eigen::MatrixXd& chains) {
  const Eigen::Index n = chains.rows();
  const Eigen::Index m = chains.cols();
  Eigen::VectorXd means = chains.colwise().mean();
  Eigen::MatrixXd centered = chains.rowwise() - means.transpose();

  auto mean_acov = [&](Eigen::Index lag) {
    double total = 0.0;
    for (Eigen::Index c = 0; c < m; ++c) {
      total += centered.col(c).head(n - lag).dot(centered.col(c).tail(n - lag)) / n;
    }
    return total / m;
  };

  const double acov0 = mean_acov(0);
  const double mean_var = acov0 * n / (n - 1.0);
  double var_plus = mean_var * (n - 1.0) / n;
  if (m > 1) {
    double grand = means.mean();
    var_plus += (means.array() - grand).square().sum() / (m - 1.0);
  }

  std::vector<double> rho(n + 1, 0.0);
  auto rho_at = [&](Eigen::Index lag) {
    if (lag >= n) return 0.0;
    return 1.0 - (mean_var - mean_acov(lag)) / var_plus;
  };
  Eigen::Index t = 0;
  double rho_even = 1.0;
  rho[0] = rho_even;
  double rho_odd = rho_at(1);
  rho[1] = rho_odd;
  while (t < n - 5 && !std::isnan(rho_even + rho_odd) && rho_even + rho_odd > 0.0) {
    t += 2;
    rho_even = rho_at(t);
    rho_odd = rho_at(t + 1);
    if (rho_even + rho_odd >= 0.0) {
      rho[t] = rho_even;
      rho[t + 1] = rho_odd;
    }
  }
  const Eigen::Index max_t = t;
  if (rho_even > 0.0) rho[max_t] = rho_even;

  t = 0;
  while (t <= max_t - 4) {
    t += 2;
    if (rho[t] + rho[t + 1] > rho[t - 2] + rho[t - 1]) {
      rho[t] = 0.5 * (rho[t - 2] + rho[t - 1]);
      rho[t + 1] = rho[t];
    }
  }
  const double total = static_cast<double>(n * m);
  double tau = -1.0 + rho[max_t];
  for (Eigen::Index k = 0; k < max_t; ++k) tau += 2.0 * rho[k];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

Eigen::MatrixXd rank_normalize(const Eigen::MatrixXd& draws) {
  const Eigen::Index total = draws.size();
  std::vector<Eigen::Index> order(total);
  std::iota(order.begin(), order.end(), 0);
  const double* v = draws.data();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  Eigen::MatrixXd out(draws.rows(), draws.cols());
  double* o = out.data();
  Eigen::Index i = 0;
  while (i < total) {
    Eigen::Index j = i;
    while (j + 1 < total && v[order[j + 1]] == v[order[i]]) ++j;
    double avg_rank = 0.5 * (i + j) + 1.0;
    double z = normal_quantile((avg_rank - 0.375) / (total + 0.25));
    for (Eigen::Index k = i; k <= j; ++k) o[order[k]] = z;
    i = j + 1;
  }
  return out;
}

Diagnostic check_shape(const Eigen::MatrixXd& draws) {
  if (draws.rows() < 4 || draws.cols() < 1) {
    return {1.0, ErrorCode::InsufficientDraws};
  }
  if (is_constant(draws)) return {1.0, ErrorCode::DegenerateChains};
  return {1.0, std::nullopt};
}

}  // namespace

int DrawTable::column(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

Eigen::MatrixXd DrawTable::by_chain(int col) const {
  Eigen::MatrixXd out(draws_per_chain, chains);
  for (int c = 0; c < chains; ++c) {
    out.col(c) = values.col(col).segment(static_cast<Eigen::Index>(c) * draws_per_chain, draws_per_chain);
  }
  return out;
}

void DrawTable::append(const DrawTable& other) {
  if (other.chains != chains || other.draws_per_chain != draws_per_chain) {
    throw Error(ErrorCode::DimensionMismatch, "draw tables have different chain layouts");
  }
  Eigen::MatrixXd merged(values.rows(), values.cols() + other.values.cols());
  merged << values, other.values;
  values = std::move(merged);
  names.insert(names.end(), other.names.begin(), other.names.end());
}

Diagnostic split_rhat(const Eigen::MatrixXd& draws) {
  Diagnostic shape = check_shape(draws);
  if (!shape.ok()) return shape;
  Eigen::MatrixXd chains = split_chains(draws);
  const double n = static_cast<double>(chains.rows());
  Eigen::VectorXd means = chains.colwise().mean();
  Eigen::VectorXd vars(chains.cols());
  for (Eigen::Index c = 0; c < chains.cols(); ++c) {
    vars[c] = (chains.col(c).array() - means[c]).square().sum() / (n - 1.0);
  }
  const double w = vars.mean();
  if (!(w > 0.0)) return {1.0, ErrorCode::DegenerateChains};
  const double grand = means.mean();
  const double b = n * (means.array() - grand).square().sum() / (chains.cols() - 1.0);
  const double var_hat = (n - 1.0) / n * w + b / n;
  return {std::sqrt(var_hat / w), std::nullopt};
}

Diagnostic ess_basic(const Eigen::MatrixXd& draws) {
  Diagnostic shape = check_shape(draws);
  if (!shape.ok()) {
    shape.value = static_cast<double>(draws.size());
    return shape;
  }
  return {ess_of(split_chains(draws)), std::nullopt};
}

Diagnostic ess_bulk(const Eigen::MatrixXd& draws) {
  Diagnostic shape = check_shape(draws);
  if (!shape.ok()) {
    shape.value = static_cast<double>(draws.size());
    return shape;
  }
  return {ess_of(rank_normalize(split_chains(draws))), std::nullopt};
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw Error(ErrorCode::InsufficientDraws, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

ParameterSummary summarize_column(const DrawTable& table, int col) {
  ParameterSummary s;
  s.name = table.names.at(col);
  const Eigen::VectorXd v = table.values.col(col);
  const Eigen::Index total = v.size();
  std::vector<double> sorted(v.data(), v.data() + total);
  s.mean = v.mean();
  s.sd = total > 1 ? std::sqrt((v.array() - s.mean).square().sum() / (total - 1.0)) : 0.0;
  s.q025 = quantile(sorted, 0.025);
  s.q50 = quantile(sorted, 0.5);
  s.q975 = quantile(sorted, 0.975);

  Eigen::MatrixXd chains = table.by_chain(col);
  Diagnostic rhat = split_rhat(chains);
  Diagnostic bulk = ess_bulk(chains);
  Diagnostic basic = ess_basic(chains);
  s.rhat = rhat.value;
  s.ess_bulk = bulk.value;
  s.ess_ratio = total > 0 ? bulk.value / static_cast<double>(total) : 0.0;
  s.mcse_mean = basic.ok() ? s.sd / std::sqrt(basic.value) : 0.0;
  s.degenerate = !rhat.ok() || !bulk.ok();
  return s;
}

std::vector<ParameterSummary> summarize(const DrawTable& table) {
  std::vector<ParameterSummary> out;
  out.reserve(table.names.size());
  for (int c = 0; c < static_cast<int>(table.names.size()); ++c) {
    out.push_back(summarize_column(table, c));
  }
  return out;
}

nlohmann::json summary_to_json(const ParameterSummary& s) {
  return {{"name", s.name},       {"mean", s.mean},         {"sd", s.sd},
          {"q2.5", s.q025},       {"q50", s.q50},           {"q97.5", s.q975},
          {"rhat", s.rhat},       {"ess_bulk", s.ess_bulk}, {"ess_ratio", s.ess_ratio},
          {"mcse_mean", s.mcse_mean}, {"degenerate", s.degenerate}};
}

}  // namespace peergrade

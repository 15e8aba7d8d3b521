#include "peergrade/comparison.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "peergrade/dataset.hpp"
#include "peergrade/error.hpp"

namespace peergrade {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename V>
double log_sum_exp(const V& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / (v.size() - 1.0);
}

void require_draws(const Eigen::MatrixXd& pll, Eigen::Index minimum) {
  if (pll.rows() < minimum || pll.cols() == 0) {
    throw Error(ErrorCode::InsufficientDraws,
                "need at least " + std::to_string(minimum) + " draws and one observation");
  }
  if (!pll.allFinite()) {
    throw Error(ErrorCode::InsufficientDraws, "pointwise log-likelihood contains non-finite values");
  }
}

}  // namespace

WaicResult waic(const Eigen::MatrixXd& pll) {
  require_draws(pll, 2);
  const Eigen::Index n = pll.cols();
  const double log_s = std::log(static_cast<double>(pll.rows()));
  WaicResult r;
  r.pointwise_lppd.resize(n);
  r.pointwise_p_waic.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd col = pll.col(i);
    r.pointwise_lppd[i] = log_sum_exp(col) - log_s;
    r.pointwise_p_waic[i] = sample_variance(col);
  }
  r.lppd = r.pointwise_lppd.sum();
  r.p_waic = r.pointwise_p_waic.sum();
  r.waic = -2.0 * (r.lppd - r.p_waic);
  Eigen::VectorXd pointwise = -2.0 * (r.pointwise_lppd - r.pointwise_p_waic);
  r.se_waic = std::sqrt(n * sample_variance(pointwise));
  return r;
}

GpdFit gpd_fit(std::vector<double> x, bool adjust_k) {
  const int n = static_cast<int>(x.size());
  if (n < 2) throw Error(ErrorCode::InsufficientDraws, "GPD fit needs at least two exceedances");
  std::sort(x.begin(), x.end());
  constexpr double kPrior = 3.0;
  const int m = 30 + static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
  const double x_star = x[static_cast<int>(std::floor(n / 4.0 + 0.5)) - 1];
  std::vector<double> theta(m);
  std::vector<double> log_lik(m);
  for (int j = 0; j < m; ++j) {
    theta[j] = 1.0 / x[n - 1] + (1.0 - std::sqrt(m / (j + 0.5))) / kPrior / x_star;
    double b = -theta[j];
    double mean_log = 0.0;
    for (double xi : x) mean_log += std::log1p(b * xi);
    mean_log /= n;
    log_lik[j] = n * (std::log(b / mean_log) - mean_log - 1.0);
  }
  const double max_ll = *std::max_element(log_lik.begin(), log_lik.end());
  double norm = 0.0;
  for (double l : log_lik) norm += std::exp(l - max_ll);
  double theta_hat = 0.0;
  for (int j = 0; j < m; ++j) theta_hat += theta[j] * std::exp(log_lik[j] - max_ll) / norm;
  double k = 0.0;
  for (double xi : x) k += std::log1p(-theta_hat * xi);
  k /= n;
  GpdFit fit;
  fit.sigma = -k / theta_hat;
  if (adjust_k) {
    constexpr double a = 10.0;
    k = k * n / (n + a) + a * 0.5 / (n + a);
  }
  fit.k = std::isnan(k) ? std::numeric_limits<double>::infinity() : k;
  return fit;
}

double gpd_quantile(double p, double k, double sigma) {
  if (k == 0.0) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

SmoothedWeights psis_smooth(const Eigen::VectorXd& log_ratios) {
  const Eigen::Index s = log_ratios.size();
  SmoothedWeights out;
  Eigen::VectorXd lw = log_ratios.array() - log_ratios.maxCoeff();
  const auto tail_len = static_cast<Eigen::Index>(
      std::ceil(std::min(0.2 * s, 3.0 * std::sqrt(static_cast<double>(s)))));

  std::vector<Eigen::Index> order(s);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return lw[a] < lw[b]; });

  if (tail_len < 5 || tail_len >= s) {
    out.k_valid = false;
    out.pareto_k = kNaN;
  } else {
    const double cutoff = lw[order[s - tail_len - 1]];
    const double exp_cutoff = std::exp(cutoff);
    std::vector<double> exceedances(tail_len);
    for (Eigen::Index j = 0; j < tail_len; ++j) {
      exceedances[j] = std::exp(lw[order[s - tail_len + j]]) - exp_cutoff;
    }
    const bool degenerate =
        lw[order[s - tail_len]] == lw[order[s - 1]] || exceedances.back() <= 0.0;
    if (degenerate) {
      out.k_valid = false;
      out.pareto_k = kNaN;
    } else {
      GpdFit fit = gpd_fit(exceedances);
      out.pareto_k = fit.k;
      if (std::isfinite(fit.k)) {
        for (Eigen::Index j = 0; j < tail_len; ++j) {
          double p = (j + 0.5) / static_cast<double>(tail_len);
          lw[order[s - tail_len + j]] = std::log(gpd_quantile(p, fit.k, fit.sigma) + exp_cutoff);
        }
      }
    }
  }
  lw = lw.array().min(0.0);
  out.log_weights = lw.array() - log_sum_exp(lw);
  return out;
}

int LooResult::count_k_above(double threshold) const {
  int count = 0;
  for (Eigen::Index i = 0; i < pareto_k.size(); ++i) {
    if (k_valid[i] && pareto_k[i] > threshold) ++count;
  }
  return count;
}

LooResult psis_loo(const Eigen::MatrixXd& pll) {
  require_draws(pll, 2);
  const Eigen::Index n = pll.cols();
  const double log_s = std::log(static_cast<double>(pll.rows()));
  LooResult r;
  r.pointwise_elpd.resize(n);
  r.pareto_k.resize(n);
  r.k_valid.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd col = pll.col(i);
    SmoothedWeights w = psis_smooth(-col);
    r.pointwise_elpd[i] = log_sum_exp(Eigen::VectorXd(w.log_weights + col));
    r.pareto_k[i] = w.pareto_k;
    r.k_valid[i] = w.k_valid;
    r.lppd += log_sum_exp(col) - log_s;
  }
  r.elpd_loo = r.pointwise_elpd.sum();
  r.p_loo = r.lppd - r.elpd_loo;
  r.se = std::sqrt(n * sample_variance(r.pointwise_elpd));
  return r;
}

ModelPredictive predictive_summary(std::string name, const Eigen::MatrixXd& pll,
                                   std::string data_hash) {
  ModelPredictive m;
  m.name = std::move(name);
  m.data_hash = std::move(data_hash);
  m.loo = psis_loo(pll);
  m.waic = waic(pll);
  return m;
}

ComparisonReport compare(const std::vector<ModelPredictive>& models) {
  if (models.empty()) throw Error(ErrorCode::MismatchedObservations, "no models to compare");
  for (const auto& m : models) {
    if (m.loo.pointwise_elpd.size() != models[0].loo.pointwise_elpd.size() ||
        (!m.data_hash.empty() && !models[0].data_hash.empty() && m.data_hash != models[0].data_hash)) {
      throw Error(ErrorCode::MismatchedObservations,
                  "models '" + models[0].name + "' and '" + m.name + "' were fitted to different observations");
    }
  }
  std::vector<std::size_t> order(models.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return models[a].loo.elpd_loo > models[b].loo.elpd_loo;
  });
  const auto& best = models[order[0]].loo;
  const double n = static_cast<double>(best.pointwise_elpd.size());
  ComparisonReport report;
  for (std::size_t idx : order) {
    const auto& m = models[idx];
    ComparisonRow row;
    row.model = m.name;
    row.elpd_loo = m.loo.elpd_loo;
    row.se = m.loo.se;
    row.p_loo = m.loo.p_loo;
    row.delta_elpd = m.loo.elpd_loo - best.elpd_loo;
    Eigen::VectorXd diff = m.loo.pointwise_elpd - best.pointwise_elpd;
    row.se_delta = std::sqrt(n * sample_variance(diff));
    row.waic = m.waic.waic;
    row.p_waic = m.waic.p_waic;
    row.high_k = m.loo.count_k_above(0.7);
    report.rows.push_back(row);
  }
  return report;
}

std::string ComparisonReport::to_csv() const {
  std::ostringstream out;
  out << "model,elpd_loo,se,delta_elpd,se_delta,waic,p_loo,p_waic,high_k\n";
  for (const auto& r : rows) {
    out << r.model << ',' << format_double(r.elpd_loo) << ',' << format_double(r.se) << ','
        << format_double(r.delta_elpd) << ',' << format_double(r.se_delta) << ','
        << format_double(r.waic) << ',' << format_double(r.p_loo) << ','
        << format_double(r.p_waic) << ',' << r.high_k << '\n';
  }
  return out.str();
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"model", r.model},       {"elpd_loo", r.elpd_loo},
                         {"se", r.se},             {"delta_elpd", r.delta_elpd},
                         {"se_delta", r.se_delta}, {"waic", r.waic},
                         {"p_loo", r.p_loo},       {"p_waic", r.p_waic},
                         {"high_k", r.high_k}});
  }
  return rows_json;
}

std::string pareto_k_csv(const std::vector<ModelPredictive>& models) {
  std::ostringstream out;
  out << "observation";
  for (const auto& m : models) out << ',' << m.name;
  out << '\n';
  const Eigen::Index n = models.empty() ? 0 : models[0].loo.pareto_k.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    out << i + 1;
    for (const auto& m : models) {
      out << ',';
      if (m.loo.k_valid[i]) {
        out << format_double(m.loo.pareto_k[i]);
      } else {
        out << "NA";
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace peergrade

// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,9] [--quick]
//
// --quick shortens the recovery fits to 4 x 1000 iterations; thresholds are unchanged.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "peergrade/comparison.hpp"
#include "peergrade/detail/corr_transform.hpp"
#include "peergrade/diagnostics.hpp"
#include "peergrade/models.hpp"
#include "peergrade/posterior.hpp"
#include "peergrade/sampler.hpp"
#include "peergrade/simulation.hpp"

using namespace peergrade;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

bool quick = false;

Eigen::VectorXd normal_vector(int dim, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> normal(0.0, sd);
  return Eigen::VectorXd::NullaryExpr(dim, [&] { return normal(rng); });
}

SimulatedData small_dataset(Variant v, std::uint64_t seed) {
  const auto& t = traits(v);
  GeneratorConfig g = default_generator(v, 6, t.single_assessment ? 1 : std::max(3, t.min_assessments), 2);
  g.sigma *= 0.5;
  g.seed = seed;
  if (t.ordinal) g.categories = 4;
  if (t.piech) g.piech = {0.0, 2.0, 0.1, 1.0, 2.0};
  return generate(g);
}

ParameterLayout layout_of(Variant v, const PeerGradingDataset& d) {
  ModelSpec spec;
  spec.variant = v;
  return layout_for(spec, d.num_students(), d.num_assessments(),
                    d.scale().is_ordinal() ? d.scale().categories : 0);
}

void tame_piech(const ParameterLayout& layout, Eigen::VectorXd& u) {
  if (!layout.spec.traits().piech) return;
  u[layout.block("log_gamma0").offset] += 1.5;
  u[layout.block("gamma1").offset] *= 0.1;
}

// ---------------------------------------------------------------------------------------------
// 1. gradients

Outcome gradient_correctness() {
  const double h = 1e-5;
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::string worst_variant;
  for (Variant v : all_variants()) {
    auto sim = small_dataset(v, 7);
    auto layout = layout_of(v, sim.data);
    PosteriorDensity target(layout, sim.data);
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::VectorXd u = normal_vector(layout.total_dim, rng, 0.5);
      tame_piech(layout, u);
      Eigen::VectorXd grad;
      if (!std::isfinite(target(u, grad))) return {false, "non-finite density for " + std::string(to_string(v))};
      for (int j = 0; j < layout.total_dim; ++j) {
        Eigen::VectorXd up = u, down = u;
        up[j] += h;
        down[j] -= h;
        double fd = (target.log_density(up) - target.log_density(down)) / (2.0 * h);
        double err = std::abs(grad[j] - fd) / std::max({1.0, std::abs(grad[j]), std::abs(fd)});
        if (err > worst) {
          worst = err;
          worst_variant = std::string(to_string(v));
        }
      }
    }
  }
  return {worst < 1e-6, fmt("%zu variants x 20 points, max relative error %.2e (%s), tolerance 1e-6",
                            all_variants().size(), worst, worst_variant.c_str())};
}

// ---------------------------------------------------------------------------------------------
// 2. sampler calibration

struct GaussianCase {
  std::string name;
  Eigen::MatrixXd covariance;
};

Outcome sampler_calibration() {
  std::vector<GaussianCase> cases;
  Eigen::Matrix2d c2;
  c2 << 1.0, 0.9, 0.9, 1.0;
  cases.push_back({"2-D rho 0.9", c2});
  Eigen::VectorXd sds(10);
  for (int j = 0; j < 10; ++j) sds[j] = std::pow(10.0, -1.0 + 2.0 * j / 9.0);
  Eigen::MatrixXd c10 = sds.array().square().matrix().asDiagonal();
  c10(0, 1) = c10(1, 0) = 0.5 * sds[0] * sds[1];
  cases.push_back({"10-D scales 0.1..10", c10});

  bool pass = true;
  std::string detail;
  for (const auto& gc : cases) {
    const int dim = static_cast<int>(gc.covariance.rows());
    Eigen::MatrixXd precision = gc.covariance.inverse();
    LogDensityFn f = [&](const Eigen::VectorXd& q, Eigen::VectorXd& grad) {
      grad = -precision * q;
      return 0.5 * q.dot(grad);
    };
    long transitions = 0, divergent = 0;
    int outliers = 0, zs = 0;
    Eigen::VectorXd z_sum = Eigen::VectorXd::Zero(dim);
    for (int seed = 1; seed <= 20; ++seed) {
      SamplerConfig config;
      config.seed = 1000 + seed;
      std::vector<Eigen::MatrixXd> draws(dim, Eigen::MatrixXd(config.num_draws(), config.chains));
      for (int c = 0; c < config.chains; ++c) {
        auto chain = run_chain(f, dim, config, c);
        for (int j = 0; j < dim; ++j) draws[j].col(c) = chain.draws.col(j);
        for (const auto& s : chain.stats) divergent += s.divergent ? 1 : 0;
        transitions += static_cast<long>(chain.stats.size());
      }
      for (int j = 0; j < dim; ++j) {
        const auto& d = draws[j];
        double mean = d.mean();
        double sd = std::sqrt((d.array() - mean).square().sum() / (d.size() - 1.0));
        double mcse = sd / std::sqrt(ess_basic(d).value);
        double z = mean / mcse;
        z_sum[j] += z;
        ++zs;
        if (std::abs(z) > 3.0) ++outliers;
      }
    }
    // Seeds are independent, so the averaged z-score has unit variance times 1/sqrt(20).
    double pooled = (z_sum / std::sqrt(20.0)).cwiseAbs().maxCoeff();
    double div_fraction = static_cast<double>(divergent) / transitions;
    double outlier_fraction = static_cast<double>(outliers) / zs;
    bool ok = pooled < 3.0 && outlier_fraction < 0.02 && div_fraction < 0.001;
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += fmt("%s: max pooled |z| %.2f, per-seed |z|>3 %d/%d, divergent %.4f%%", gc.name.c_str(), pooled,
                  outliers, zs, 100.0 * div_fraction);
  }
  return {pass, detail + " (20 seeds)"};
}

// ---------------------------------------------------------------------------------------------
// Shared recovery runs.

SamplerConfig recovery_sampler() {
  SamplerConfig s;
  s.chains = 4;
  s.iterations = quick ? 1000 : 2000;
  s.warmup = quick ? 500 : 1000;
  s.threads = 0;
  return s;
}

RecoveryConfig appendix_c(ScalePrior prior, const std::string& label) {
  RecoveryConfig c;
  c.generator = default_generator(Variant::M4, 100, 4, 3);
  c.generator.sigma = Eigen::Vector4d(1.0, 1.0, 0.2, 0.2);
  c.generator.delta_mean = 0.0;
  c.generator.delta_sd = 1.0;
  c.fit.variant = Variant::M4;
  c.fit.priors.scale = prior;
  c.sampler = recovery_sampler();
  c.sampler.target_accept = 0.95;
  c.replications = 10;
  c.seed = 20240603;
  c.label = label;
  return c;
}

RecoveryConfig appendix_b() {
  RecoveryConfig c;
  c.generator = default_generator(Variant::LGC_LIN, 100, 6, 3);
  c.generator.delta = (Eigen::VectorXd(6) << 2.52, -1.72, -1.01, 1.39, -3.45, 3.30).finished();
  c.generator.delta_sd = 2.0;
  c.generator.sigma = (Eigen::VectorXd(5) << 1.0, 0.1, 1.0, 0.2, 0.2).finished();
  c.fit.variant = Variant::LGC_LIN;
  c.sampler = recovery_sampler();
  c.sampler.target_accept = 0.9;
  c.replications = 5;
  c.seed = 20240602;
  c.label = "lgc_linear";
  return c;
}

struct Scenario {
  RecoveryConfig config;
  std::vector<RecoveryReport> reports;
};

std::optional<std::vector<Scenario>> sensitivity_runs;
std::optional<Scenario> lgc_run;

void log_report(const std::string& label, const RecoveryReport& r) {
  std::fprintf(stderr, "  [%s rep %d] ok=%d rmse=%.3f base=%.3f cover=%.2f rhat=%.4f ess=%.3f div=%.4f %.1fs%s%s\n",
               label.c_str(), r.replication + 1, r.ok, r.rmse_model, r.rmse_mean_baseline, r.coverage,
               r.max_rhat, r.min_ess_ratio, r.divergent_fraction, r.seconds, r.ok ? "" : " ", r.error.c_str());
}

const std::vector<Scenario>& sensitivity() {
  if (!sensitivity_runs) {
    sensitivity_runs.emplace();
    const std::pair<ScalePrior, std::string> priors[] = {{ScalePrior::half_cauchy(5.0), "half_cauchy"},
                                                         {ScalePrior::inv_gamma(0.5, 0.5), "inv_gamma"},
                                                         {ScalePrior::exponential(0.5), "exponential"}};
    for (const auto& [prior, label] : priors) {
      Scenario s{appendix_c(prior, label), {}};
      for (int r = 0; r < s.config.replications; ++r) {
        // The first scenario keeps pointwise likelihoods for model comparison.
        s.reports.push_back(run_replication(s.config, r, sensitivity_runs->empty()));
        log_report(label, s.reports.back());
      }
      sensitivity_runs->push_back(std::move(s));
    }
  }
  return *sensitivity_runs;
}

const Scenario& lgc() {
  if (!lgc_run) {
    lgc_run = Scenario{appendix_b(), {}};
    for (int r = 0; r < lgc_run->config.replications; ++r) {
      lgc_run->reports.push_back(run_replication(lgc_run->config, r));
      log_report("lgc", lgc_run->reports.back());
    }
  }
  return *lgc_run;
}

// ---------------------------------------------------------------------------------------------
// 3. Appendix C benchmark

Outcome appendix_c_benchmark() {
  const auto& reports = sensitivity().front().reports;
  RecoveryAggregate a = aggregate(reports);
  if (a.succeeded != a.replications) return {false, fmt("%d/%d fits failed", a.replications - a.succeeded, a.replications)};
  const double tol = 0.15;
  bool pass = std::abs(a.rmse_model - 1.99) <= tol && std::abs(a.mae_model - 1.59) <= tol &&
              std::abs(a.rmse_mean_baseline - 2.46) <= tol && std::abs(a.mae_mean_baseline - 1.98) <= tol &&
              a.model_beats_baseline >= 9;
  return {pass, fmt("model RMSE/MAE %.3f/%.3f (target 1.99/1.59), baseline %.3f/%.3f (target 2.46/1.98), "
                    "tolerance 0.15, model beats baseline %d/10",
                    a.rmse_model, a.mae_model, a.rmse_mean_baseline, a.mae_mean_baseline, a.model_beats_baseline)};
}

// ---------------------------------------------------------------------------------------------
// 4. prior sensitivity

Outcome prior_sensitivity() {
  std::vector<double> rmse;
  std::string detail;
  for (const auto& s : sensitivity()) {
    RecoveryAggregate a = aggregate(s.reports);
    if (a.succeeded != a.replications) return {false, s.config.label + " had failed fits"};
    rmse.push_back(a.rmse_model);
    detail += fmt("%s %.4f, ", s.config.label.c_str(), a.rmse_model);
  }
  double lo = *std::min_element(rmse.begin(), rmse.end());
  double hi = *std::max_element(rmse.begin(), rmse.end());
  double spread = (hi - lo) / lo;
  return {spread < 0.01, detail + fmt("relative spread %.3f%% (limit 1%%)", 100.0 * spread)};
}

// ---------------------------------------------------------------------------------------------
// 5. Appendix B recovery

Outcome appendix_b_recovery() {
  const auto& s = lgc();
  double coverage = 0.0;
  int ok = 0;
  std::string per;
  std::set<std::string> missed;
  for (const auto& r : s.reports) {
    if (!r.ok) continue;
    ++ok;
    coverage += r.coverage;
    per += fmt("%.2f ", r.coverage);
    for (const auto& p : r.parameters) {
      if (!p.covered) missed.insert(p.name);
    }
  }
  if (ok == 0) return {false, "all fits failed: " + s.reports.front().error};
  coverage /= ok;
  std::string missed_list;
  for (const auto& m : missed) missed_list += (missed_list.empty() ? "" : " ") + m;
  return {ok == static_cast<int>(s.reports.size()) && coverage >= 0.8,
          fmt("mean coverage %.3f over %d/%zu replications (per replication: %s), threshold 0.80; missed: %s",
              coverage, ok, s.reports.size(), per.c_str(), missed_list.empty() ? "none" : missed_list.c_str())};
}

// ---------------------------------------------------------------------------------------------
// 6. model comparison

Outcome model_comparison() {
  const Scenario& base = sensitivity().front();
  int clear = 0, agree = 0, n = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  for (const auto& r : base.reports) {
    if (!r.ok) continue;
    ++n;
    GeneratorConfig gen = base.config.generator;
    gen.seed = replication_seed(base.config.seed, r.replication);
    SimulatedData sim = generate(gen);
    ModelSpec m1;
    m1.variant = Variant::M1;
    FitResult fit = fit_model(m1, sim.data, base.config.sampler);
    auto m4 = predictive_summary("M4", r.pointwise_loglik);
    auto m1p = predictive_summary("M1", stacked_pointwise(fit.run));
    ComparisonReport report = compare({m1p, m4});
    const auto& second = report.rows[1];
    double ratio = -second.delta_elpd / second.se_delta;
    if (report.rows[0].model == "M4" && ratio > 2.0) ++clear;
    min_ratio = std::min(min_ratio, report.rows[0].model == "M4" ? ratio : -ratio);
    bool waic_m4 = m4.waic.waic < m1p.waic.waic;
    bool loo_m4 = m4.loo.elpd_loo > m1p.loo.elpd_loo;
    if (waic_m4 == loo_m4) ++agree;
  }
  return {n == 10 && clear == n && agree >= 9,
          fmt("M4 above M1 with delta > 2 se in %d/%d seeds (min delta/se %.1f); WAIC agrees with elpd_loo in %d/%d",
              clear, n, min_ratio, agree, n)};
}

// ---------------------------------------------------------------------------------------------
// 7. PSIS-LOO against brute-force refits

Outcome psis_vs_refit() {
  GeneratorConfig gen = default_generator(Variant::M2s, 8, 1, 2);
  gen.sigma = Eigen::Vector2d(1.0, 0.5);
  gen.seed = 77;
  SimulatedData sim = generate(gen);
  ModelSpec spec;
  spec.variant = Variant::M2s;
  SamplerConfig sampler;
  sampler.seed = 9;
  sampler.threads = 0;

  FitResult full = fit_model(spec, sim.data, sampler);
  LooResult loo = psis_loo(stacked_pointwise(full.run));
  ParameterLayout layout = full.layout;
  PosteriorDensity full_target(layout, sim.data);

  const auto& obs = sim.data.observations();
  double brute = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    std::vector<GradeObservation> held(obs.begin(), obs.end());
    held.erase(held.begin() + static_cast<std::ptrdiff_t>(i));
    PeerGradingDataset rest = validate_dataset(held, sim.data.scale(), sim.data.students(), sim.data.assessments());
    FitResult refit = fit_model(spec, rest, sampler, false);
    // Same roster, so refit draws live in the full-data parameter space.
    std::vector<double> ll;
    for (const auto& c : refit.run.chains) {
      for (Eigen::Index s = 0; s < c.draws.rows(); ++s) ll.push_back(full_target.pointwise(c.draws.row(s).transpose())[i]);
    }
    double m = *std::max_element(ll.begin(), ll.end());
    double acc = 0.0;
    for (double v : ll) acc += std::exp(v - m);
    brute += m + std::log(acc / ll.size());
  }
  double diff = std::abs(loo.elpd_loo - brute);
  return {diff < 2.0 * loo.se, fmt("PSIS elpd_loo %.3f, refit elpd %.3f, |diff| %.3f vs 2 se %.3f (n=%zu, max k %.2f)",
                                   loo.elpd_loo, brute, diff, 2.0 * loo.se, obs.size(), loo.pareto_k.maxCoeff())};
}

// ---------------------------------------------------------------------------------------------
// 8. convergence gates

Outcome convergence_gates() {
  int total = 0, good = 0;
  double worst_rhat = 0.0, worst_ess = std::numeric_limits<double>::infinity();
  auto visit = [&](const std::vector<RecoveryReport>& reports) {
    for (const auto& r : reports) {
      ++total;
      if (!r.ok) continue;
      worst_rhat = std::max(worst_rhat, r.max_rhat);
      worst_ess = std::min(worst_ess, r.min_ess_ratio);
      if (r.max_rhat < 1.01 && r.min_ess_ratio > 0.10) ++good;
    }
  };
  for (const auto& s : sensitivity()) visit(s.reports);
  visit(lgc().reports);
  return {good == total, fmt("%d/%d recovery fits with every structural rhat < 1.01 and ess ratio > 0.10 "
                             "(worst rhat %.4f, worst ess ratio %.3f)",
                             good, total, worst_rhat, worst_ess)};
}

// ---------------------------------------------------------------------------------------------
// 9. property suites

Outcome property_suites() {
  std::vector<std::string> failed;
  std::mt19937_64 rng(909);

  double round_trip = 0.0;
  double identity = 0.0;
  double largest = 0.0;
  for (Variant v : all_variants()) {
    auto sim = small_dataset(v, 3);
    auto layout = layout_of(v, sim.data);
    PosteriorDensity target(layout, sim.data);
    for (int rep = 0; rep < 50; ++rep) {
      Eigen::VectorXd u = normal_vector(layout.total_dim, rng, 1.0);
      tame_piech(layout, u);
      auto cp = constrain(layout, u);
      round_trip = std::max(round_trip, (unconstrain(layout, cp.structural, cp.latents) - u).cwiseAbs().maxCoeff());
      auto r = target.evaluate(u);
      if (!std::isfinite(r.log_posterior)) continue;
      double residual = std::abs(r.log_posterior - r.log_jacobian - r.log_prior - r.pointwise_loglik.sum());
      identity = std::max(identity, residual / std::max(1.0, std::abs(r.log_posterior)));
      largest = std::max(largest, std::abs(r.log_posterior));
    }
  }
  if (!(round_trip < 1e-10)) failed.push_back(fmt("round trip %.1e", round_trip));
  if (!(identity < 1e-10)) failed.push_back(fmt("decomposition %.1e", identity));

  double norm = 0.0, limit = 0.0;
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<double> d(1 + rep % 6);
    for (auto& x : d) x = normal(rng);
    auto p = pcm_probs(normal(rng), normal(rng), std::exp(0.5 * normal(rng)), d);
    norm = std::max(norm, std::abs(p.sum() - 1.0));
    auto flat = pcm_probs(normal(rng), normal(rng), 1e8, d);
    limit = std::max(limit, (flat.array() - 1.0 / flat.size()).abs().maxCoeff());
  }
  if (!(norm < 1e-12)) failed.push_back(fmt("pcm normalization %.1e", norm));
  if (!(limit < 1e-6)) failed.push_back(fmt("pcm 1/K limit %.1e", limit));

  double lkj_spread = 0.0;
  for (int d : {2, 3, 4, 5, 6}) {
    std::vector<double> values;
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::VectorXd u = normal_vector(d * (d - 1) / 2, rng, 1.0);
      std::vector<double> chol(d * d);
      detail::cholesky_corr_constrain(u.data(), d, chol.data());
      Eigen::MatrixXd l = Eigen::Map<Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(chol.data(), d, d);
      values.push_back(lkj_log_density(l, 1.0));
    }
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    lkj_spread = std::max(lkj_spread, *hi - *lo);
  }
  if (!(lkj_spread < 1e-12)) failed.push_back(fmt("LKJ(1) spread %.1e", lkj_spread));

  {
    auto sim = small_dataset(Variant::M4, 5);
    PosteriorDensity target(layout_of(Variant::M4, sim.data), sim.data);
    LogDensityFn f = [&](const Eigen::VectorXd& q, Eigen::VectorXd& g) { return target(q, g); };
    double worst = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      PhasePoint z;
      z.q = normal_vector(target.dim(), rng, 0.3);
      z.p = normal_vector(target.dim(), rng, 1.0);
      z.log_density = f(z.q, z.grad);
      Eigen::VectorXd inv_metric = normal_vector(target.dim(), rng, 0.3).array().exp();
      PhasePoint start = z;
      for (int k = 0; k < 10; ++k) leapfrog(f, z, 0.01, inv_metric);
      z.p = -z.p;
      for (int k = 0; k < 10; ++k) leapfrog(f, z, 0.01, inv_metric);
      worst = std::max({worst, (z.q - start.q).cwiseAbs().maxCoeff(), (z.p + start.p).cwiseAbs().maxCoeff()});
    }
    if (!(worst < 1e-12)) failed.push_back(fmt("leapfrog reversibility %.1e", worst));
  }

  {
    const int s = 800, n = 12;
    Eigen::MatrixXd pll(s, n);
    std::normal_distribution<double> unit;
    for (int j = 0; j < n; ++j) {
      double y = unit(rng);
      for (int k = 0; k < s; ++k) {
        double mu = 0.3 * unit(rng);
        pll(k, j) = -0.5 * std::log(2.0 * M_PI) - 0.5 * (y - mu) * (y - mu);
      }
    }
    std::vector<int> perm(s);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd shuffled(s, n);
    for (int k = 0; k < s; ++k) shuffled.row(k) = pll.row(perm[k]);
    double loo_diff = std::abs(psis_loo(pll).elpd_loo - psis_loo(shuffled).elpd_loo);
    double waic_diff = std::abs(waic(pll).waic - waic(shuffled).waic);
    if (!(loo_diff < 1e-10 && waic_diff < 1e-10)) failed.push_back(fmt("permutation %.1e/%.1e", loo_diff, waic_diff));
  }

  std::string detail = fmt("round trip %.1e, decomposition %.1e relative (|log p| up to %.1e), pcm sum %.1e, pcm 1/K %.1e, LKJ spread %.1e",
                           round_trip, identity, largest, norm, limit, lkj_spread);
  for (const auto& f : failed) detail += "; failed " + f;
  return {failed.empty(), detail + ", leapfrog reversibility and WAIC/LOO permutation checked"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int a = 1; a < argc; ++a) {
    std::string arg = argv[a];
    if (arg == "--quick") {
      quick = true;
    } else if (arg == "--only" && a + 1 < argc) {
      std::stringstream ss(argv[++a]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::fprintf(stderr, "usage: %s [--only 1,2,...] [--quick]\n", argv[0]);
      return 2;
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradient_correctness},
      {2, "sampler calibration", sampler_calibration},
      {3, "appendix C benchmark", appendix_c_benchmark},
      {4, "prior-sensitivity invariance", prior_sensitivity},
      {5, "appendix B LGC recovery", appendix_b_recovery},
      {6, "model-comparison ordering", model_comparison},
      {7, "PSIS-LOO validity", psis_vs_refit},
      {8, "convergence gates", convergence_gates},
      {9, "property suites", property_suites},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %d %s: %s [%.0fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

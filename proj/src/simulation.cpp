#include "peergrade/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "peergrade/error.hpp"
#include "peergrade/models.hpp"
#include "peergrade/posterior.hpp"

namespace peergrade {

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), stream, 0x9e37u};
  return std::mt19937_64(seq);
}

std::string padded(const char* prefix, int index, int count) {
  std::string digits = std::to_string(index + 1);
  const std::size_t width = std::max<std::size_t>(3, std::to_string(count).size());
  return prefix + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json merge(nlohmann::json base, const nlohmann::json& patch) {
  base.merge_patch(patch);
  return base;
}

}  // namespace

std::string student_id(int index, int num_students) { return padded("s", index, num_students); }

std::string assessment_id(int index, int num_assessments) {
  return padded("a", index, num_assessments);
}

void GeneratorConfig::validate() const {
  const auto& t = traits(variant);
  const int d = t.latent_dim();
  if (num_students < 2) throw Error(ErrorCode::InvalidConfig, "generator needs N >= 2");
  if (num_assessments < 1) throw Error(ErrorCode::InvalidConfig, "generator needs T >= 1");
  if (graders_per_work < 1 || graders_per_work > num_students - 1) {
    throw Error(ErrorCode::InvalidM, "graders per work must lie in [1, N-1]");
  }
  if (!t.piech) {
    if (mu.size() != d || sigma.size() != d || omega.rows() != d || omega.cols() != d) {
      throw Error(ErrorCode::InvalidConfig, "mu, sigma and omega must match the latent dimension " +
                                                std::to_string(d));
    }
    if ((sigma.array() < 0.0).any()) throw Error(ErrorCode::InvalidConfig, "sigma must be >= 0");
  }
  if (t.ordinal && categories < 2) throw Error(ErrorCode::InvalidConfig, "ordinal generator needs K >= 2");
  const int width = t.ordinal ? categories - 1 : 1;
  if (delta.size() != 0 && delta.size() != num_assessments * width) {
    throw Error(ErrorCode::InvalidConfig, "delta has the wrong length");
  }
  if (!time_codes.empty() && static_cast<int>(time_codes.size()) != num_assessments) {
    throw Error(ErrorCode::InvalidConfig, "time_codes length must equal T");
  }
}

GeneratorConfig default_generator(Variant variant, int num_students, int num_assessments,
                                  int graders_per_work) {
  GeneratorConfig c;
  c.variant = variant;
  c.num_students = num_students;
  c.num_assessments = num_assessments;
  c.graders_per_work = graders_per_work;
  const int d = traits(variant).latent_dim();
  c.mu = Eigen::VectorXd::Zero(d);
  c.sigma = Eigen::VectorXd::Ones(d);
  c.omega = Eigen::MatrixXd::Identity(d, d);
  if (traits(variant).ordinal) c.categories = 5;
  return c;
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  try {
    Variant v = variant_from_string(j.value("variant", std::string("M4")));
    c = default_generator(v, j.value("N", 100), j.value("T", 4), j.value("m", 3));
    if (j.contains("K")) c.categories = j.at("K").get<int>();
    if (j.contains("delta")) c.delta = vector_from_json(j.at("delta"));
    c.delta_mean = j.value("delta_mean", c.delta_mean);
    c.delta_sd = j.value("delta_sd", c.delta_sd);
    if (j.contains("mu")) c.mu = vector_from_json(j.at("mu"));
    if (j.contains("sigma")) c.sigma = vector_from_json(j.at("sigma"));
    if (j.contains("omega")) {
      auto rows = j.at("omega").get<std::vector<std::vector<double>>>();
      c.omega.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.size()) throw Error(ErrorCode::InvalidConfig, "omega must be square");
        for (std::size_t k = 0; k < rows.size(); ++k) c.omega(r, k) = rows[r][k];
      }
    }
    c.phi = j.value("phi", c.phi);
    if (j.contains("piech")) {
      const auto& p = j.at("piech");
      c.piech.mu0 = p.value("mu0", c.piech.mu0);
      c.piech.gamma0 = p.value("gamma0", c.piech.gamma0);
      c.piech.gamma1 = p.value("gamma1", c.piech.gamma1);
      c.piech.gamma2 = p.value("gamma2", c.piech.gamma2);
      c.piech.gamma3 = p.value("gamma3", c.piech.gamma3);
    }
    if (j.contains("time_codes")) c.time_codes = j.at("time_codes").get<std::vector<double>>();
    if (j.contains("clip") && !j.at("clip").is_null()) {
      auto lim = j.at("clip").get<std::vector<double>>();
      if (lim.size() != 2) throw Error(ErrorCode::InvalidConfig, "clip must be [lo, hi]");
      c.clip = std::make_pair(lim[0], lim[1]);
    }
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad generator config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json generator_config_to_json(const GeneratorConfig& c) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  std::vector<std::vector<double>> omega(c.omega.rows());
  for (Eigen::Index r = 0; r < c.omega.rows(); ++r) {
    for (Eigen::Index k = 0; k < c.omega.cols(); ++k) omega[r].push_back(c.omega(r, k));
  }
  nlohmann::json j = {{"variant", std::string(to_string(c.variant))},
                      {"N", c.num_students},
                      {"T", c.num_assessments},
                      {"m", c.graders_per_work},
                      {"delta_mean", c.delta_mean},
                      {"delta_sd", c.delta_sd},
                      {"mu", vec(c.mu)},
                      {"sigma", vec(c.sigma)},
                      {"omega", omega},
                      {"phi", c.phi},
                      {"piech",
                       {{"mu0", c.piech.mu0},
                        {"gamma0", c.piech.gamma0},
                        {"gamma1", c.piech.gamma1},
                        {"gamma2", c.piech.gamma2},
                        {"gamma3", c.piech.gamma3}}},
                      {"seed", c.seed}};
  if (c.delta.size() > 0) j["delta"] = vec(c.delta);
  if (c.categories > 0) j["K"] = c.categories;
  if (!c.time_codes.empty()) j["time_codes"] = c.time_codes;
  if (c.clip) j["clip"] = {c.clip->first, c.clip->second};
  return j;
}

AssignmentIndex assign_graders(int num_students, int num_assessments, int graders_per_work,
                               std::mt19937_64& rng) {
  if (graders_per_work < 1 || graders_per_work > num_students - 1) {
    throw Error(ErrorCode::InvalidM, "graders per work must lie in [1, N-1]");
  }
  AssignmentIndex index;
  std::vector<int> others(num_students - 1);
  for (int i = 0; i < num_students; ++i) {
    for (int a = 0; a < num_assessments; ++a) {
      for (int g = 0, k = 0; g < num_students; ++g) {
        if (g != i) others[k++] = g;
      }
      // partial Fisher-Yates: the first m entries become a uniform m-subset
      for (int k = 0; k < graders_per_work; ++k) {
        std::uniform_int_distribution<int> pick(k, num_students - 2);
        std::swap(others[k], others[pick(rng)]);
      }
      auto& graders = index.by_work[{i, a}];
      for (int k = 0; k < graders_per_work; ++k) {
        graders.insert(others[k]);
        index.by_grader[others[k]].insert({i, a});
      }
    }
  }
  return index;
}

SimulatedData generate(const GeneratorConfig& config) {
  config.validate();
  const auto& t = traits(config.variant);
  const int n = config.num_students;
  const int tt = config.num_assessments;
  const int width = t.ordinal ? config.categories - 1 : 1;
  std::mt19937_64 rng = seeded(config.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Truth truth;
  StructuralParams& s = truth.structural;
  if (config.delta.size() > 0) {
    s.delta = config.delta;
  } else {
    s.delta.resize(tt * width);
    for (int k = 0; k < tt * width; ++k) s.delta[k] = config.delta_mean + config.delta_sd * normal(rng);
    for (int a = 0; a < tt && t.ordinal; ++a) {
      std::sort(s.delta.data() + a * width, s.delta.data() + (a + 1) * width);
    }
  }

  truth.theta.resize(n, tt);
  truth.bias = Eigen::VectorXd::Zero(n);
  truth.phi2.resize(n);
  if (t.piech) {
    s.piech = config.piech;
    truth.x.resize(n, 2);
    for (int i = 0; i < n; ++i) {
      truth.x(i, 0) = config.piech.mu0 + normal(rng) / std::sqrt(config.piech.gamma2);
      truth.x(i, 1) = normal(rng) / std::sqrt(config.piech.gamma3);
    }
    for (int i = 0; i < n; ++i) {
      truth.theta.row(i).setConstant(truth.x(i, 0));
      truth.bias[i] = truth.x(i, 1);
      double precision = config.piech.gamma0 + config.piech.gamma1 * truth.x(i, 0);
      if (!(precision > 0.0)) {
        throw Error(ErrorCode::PrecisionNotPositive,
                    "generated Piech precision is not positive for student " + std::to_string(i));
      }
      truth.phi2[i] = 1.0 / precision;
    }
  } else {
    const int d = t.latent_dim();
    s.mu = config.mu;
    s.sigma = config.sigma;
    s.phi = config.phi;
    Eigen::LLT<Eigen::MatrixXd> llt(config.omega);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::InvalidConfig, "omega is not positive definite");
    }
    s.chol_corr = llt.matrixL();
    Eigen::MatrixXd gamma(n, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) gamma(i, j) = normal(rng);
    }
    Eigen::MatrixXd z;
    if (t.per_assessment_scores) {
      z.resize(n, tt);
      for (int i = 0; i < n; ++i) {
        for (int a = 0; a < tt; ++a) z(i, a) = normal(rng);
      }
    }
    ModelSpec spec;
    spec.variant = config.variant;
    spec.time_codes = config.time_codes;
    ParameterLayout layout = layout_for(spec, n, tt, t.ordinal ? config.categories : 0);
    StudentLatents sl = assemble_student_latents(layout, s, LatentParams{gamma, z});
    truth.x = sl.x;
    truth.theta = sl.theta;
    truth.bias = sl.bias;
    truth.phi2 = sl.phi2;
  }

  truth.true_score.resize(n, tt);
  for (int a = 0; a < tt; ++a) {
    double difficulty = s.delta.segment(a * width, width).mean();
    for (int i = 0; i < n; ++i) truth.true_score(i, a) = truth.theta(i, a) - difficulty;
  }

  AssignmentIndex index = assign_graders(n, tt, config.graders_per_work, rng);
  std::vector<GradeObservation> raw;
  raw.reserve(index.edge_count());
  std::vector<double> thresholds(width);
  for (const auto& [work, graders] : index.by_work) {
    const auto [i, a] = work;
    for (int g : graders) {
      double y;
      if (t.ordinal) {
        for (int k = 0; k < width; ++k) thresholds[k] = s.delta[a * width + k];
        Eigen::VectorXd p = pcm_probs(truth.theta(i, a), truth.bias[g], std::sqrt(truth.phi2[g]), thresholds);
        std::discrete_distribution<int> category(p.data(), p.data() + p.size());
        y = category(rng) + 1;
      } else {
        y = truth.theta(i, a) + truth.bias[g] - s.delta[a] + std::sqrt(truth.phi2[g]) * normal(rng);
        if (config.clip) y = std::clamp(y, config.clip->first, config.clip->second);
      }
      raw.push_back({student_id(i, n), student_id(g, n), assessment_id(a, tt), y});
    }
  }

  Scale scale = t.ordinal ? Scale::ordinal(config.categories)
                : config.clip ? Scale::continuous(config.clip->first, config.clip->second)
                              : Scale::unbounded();
  std::vector<std::string> roster(n);
  std::vector<std::string> assessments(tt);
  for (int i = 0; i < n; ++i) roster[i] = student_id(i, n);
  for (int a = 0; a < tt; ++a) assessments[a] = assessment_id(a, tt);
  return {validate_dataset(std::move(raw), scale, roster, assessments), std::move(truth)};
}

std::string truth_csv(const GeneratorConfig& config, const Truth& truth) {
  std::ostringstream out;
  out << "quantity,student,assessment,value\n";
  const int n = config.num_students;
  const int tt = config.num_assessments;
  auto row = [&](const std::string& q, const std::string& i, const std::string& a, double v) {
    out << q << ',' << i << ',' << a << ',' << format_double(v) << '\n';
  };
  const Eigen::VectorXd& delta = truth.structural.delta;
  const int width = static_cast<int>(delta.size()) / tt;
  for (int a = 0; a < tt; ++a) {
    for (int k = 0; k < width; ++k) {
      std::string name = width == 1 ? "delta" : "delta_" + std::to_string(k + 1);
      row(name, "", assessment_id(a, tt), delta[a * width + k]);
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < tt; ++a) {
      row("true_score", student_id(i, n), assessment_id(a, tt), truth.true_score(i, a));
    }
  }
  for (int i = 0; i < n; ++i) {
    row("bias", student_id(i, n), "", truth.bias[i]);
    row("phi", student_id(i, n), "", std::sqrt(truth.phi2[i]));
  }
  return out.str();
}

RecoveryConfig recovery_config_from_json(const nlohmann::json& j) {
  RecoveryConfig c;
  try {
    c.generator = generator_config_from_json(j.at("generator"));
    nlohmann::json model = j.contains("model") ? j.at("model")
                                               : nlohmann::json{{"model", std::string(to_string(c.generator.variant))}};
    c.fit = model_spec_from_json(model);
    if (j.contains("sampler")) c.sampler = sampler_config_from_json(j.at("sampler"));
    c.replications = j.value("replications", 1);
    c.seed = j.value("seed", c.generator.seed);
    c.label = j.value("label", std::string(to_string(c.fit.variant)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad experiment config: ") + e.what());
  }
  if (c.replications < 1) throw Error(ErrorCode::InvalidConfig, "replications must be >= 1");
  return c;
}

std::vector<RecoveryConfig> recovery_configs_from_json(const nlohmann::json& j) {
  if (!j.contains("scenarios")) return {recovery_config_from_json(j)};
  nlohmann::json base = j;
  base.erase("scenarios");
  std::vector<RecoveryConfig> out;
  for (const auto& scenario : j.at("scenarios")) out.push_back(recovery_config_from_json(merge(base, scenario)));
  return out;
}

std::uint64_t replication_seed(std::uint64_t base, int replication) {
  std::mt19937_64 rng = seeded(base, 0x1000u + static_cast<std::uint32_t>(replication));
  return rng();
}

RecoveryReport score_fit(const RecoveryConfig& config, const SimulatedData& sim, int replication,
                         bool keep_pointwise) {
  using Clock = std::chrono::steady_clock;
  auto start = Clock::now();
  RecoveryReport report;
  report.replication = replication;
  report.seed = replication_seed(config.seed, replication);

  SamplerConfig sampler = config.sampler;
  sampler.seed = report.seed;
  FitResult fit = fit_model(config.fit, sim.data, sampler, keep_pointwise);
  if (keep_pointwise) report.pointwise_loglik = stacked_pointwise(fit.run);
  report.divergent_fraction = fit.run.divergent_fraction();

  report.max_rhat = 0.0;
  report.min_ess_ratio = std::numeric_limits<double>::infinity();
  for (const auto& s : fit.structural_summary) {
    report.max_rhat = std::max(report.max_rhat, s.rhat);
    report.min_ess_ratio = std::min(report.min_ess_ratio, s.ess_ratio);
  }
  report.converged = fit.converged();

  if (config.fit.variant == config.generator.variant) {
    Eigen::VectorXd truth = structural_values(fit.layout, sim.truth.structural);
    int covered = 0;
    for (std::size_t k = 0; k < fit.structural_summary.size(); ++k) {
      const auto& s = fit.structural_summary[k];
      ParameterRecovery p{s.name, truth[static_cast<Eigen::Index>(k)], s.mean, s.q025, s.q975, false};
      p.covered = p.truth >= p.lower && p.truth <= p.upper;
      covered += p.covered ? 1 : 0;
      report.parameters.push_back(p);
    }
    if (!report.parameters.empty()) report.coverage = static_cast<double>(covered) / report.parameters.size();
  }

  DrawTable students = student_draws(fit.layout, fit.run);
  auto baseline = baseline_aggregate(sim.data, AggregationRule::Mean);
  const int tt = sim.data.num_assessments();
  double sse_model = 0.0, sae_model = 0.0, sse_base = 0.0, sae_base = 0.0;
  for (const auto& [work, mean_grade] : baseline) {
    const auto [i, a] = work;
    const double truth = sim.truth.true_score(i, a);
    const double estimate = students.values.col(i * tt + a).mean();
    sse_model += (estimate - truth) * (estimate - truth);
    sae_model += std::abs(estimate - truth);
    sse_base += (mean_grade - truth) * (mean_grade - truth);
    sae_base += std::abs(mean_grade - truth);
  }
  const double works = static_cast<double>(baseline.size());
  report.rmse_model = std::sqrt(sse_model / works);
  report.mae_model = sae_model / works;
  report.rmse_mean_baseline = std::sqrt(sse_base / works);
  report.mae_mean_baseline = sae_base / works;
  report.ok = true;
  report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

RecoveryReport run_replication(const RecoveryConfig& config, int replication, bool keep_pointwise) {
  try {
    GeneratorConfig gen = config.generator;
    gen.seed = replication_seed(config.seed, replication);
    SimulatedData sim = generate(gen);
    return score_fit(config, sim, replication, keep_pointwise);
  } catch (const std::exception& e) {
    RecoveryReport failed;
    failed.replication = replication;
    failed.seed = replication_seed(config.seed, replication);
    failed.error = e.what();
    return failed;
  }
}

std::vector<RecoveryReport> recovery_experiment(const RecoveryConfig& config) {
  std::vector<RecoveryReport> reports;
  for (int r = 0; r < config.replications; ++r) reports.push_back(run_replication(config, r));
  return reports;
}

RecoveryAggregate aggregate(const std::vector<RecoveryReport>& reports) {
  RecoveryAggregate agg;
  agg.replications = static_cast<int>(reports.size());
  for (const auto& r : reports) {
    if (!r.ok) continue;
    ++agg.succeeded;
    agg.coverage += r.coverage;
    agg.rmse_model += r.rmse_model;
    agg.mae_model += r.mae_model;
    agg.rmse_mean_baseline += r.rmse_mean_baseline;
    agg.mae_mean_baseline += r.mae_mean_baseline;
    agg.model_beats_baseline += r.rmse_model <= r.rmse_mean_baseline ? 1 : 0;
    agg.converged += r.converged ? 1 : 0;
  }
  if (agg.succeeded > 0) {
    const double k = agg.succeeded;
    agg.coverage /= k;
    agg.rmse_model /= k;
    agg.mae_model /= k;
    agg.rmse_mean_baseline /= k;
    agg.mae_mean_baseline /= k;
  }
  return agg;
}

std::string recovery_report_csv(const RecoveryReport& r) {
  std::ostringstream out;
  out << "quantity,truth,estimate,lower,upper,covered\n";
  for (const auto& p : r.parameters) {
    out << p.name << ',' << format_double(p.truth) << ',' << format_double(p.mean) << ','
        << format_double(p.lower) << ',' << format_double(p.upper) << ',' << (p.covered ? 1 : 0)
        << '\n';
  }
  auto metric = [&](const char* name, double v) { out << name << ",," << format_double(v) << ",,,\n"; };
  metric("coverage", r.coverage);
  metric("rmse_model", r.rmse_model);
  metric("mae_model", r.mae_model);
  metric("rmse_mean_baseline", r.rmse_mean_baseline);
  metric("mae_mean_baseline", r.mae_mean_baseline);
  metric("max_rhat", r.max_rhat);
  metric("min_ess_ratio", r.min_ess_ratio);
  metric("divergent_fraction", r.divergent_fraction);
  metric("seconds", r.seconds);
  return out.str();
}

std::string aggregate_csv(const std::vector<std::pair<std::string, RecoveryAggregate>>& rows) {
  std::ostringstream out;
  out << "scenario,replications,succeeded,coverage,rmse_model,mae_model,rmse_mean_baseline,"
         "mae_mean_baseline,model_beats_baseline,converged\n";
  for (const auto& [label, a] : rows) {
    out << label << ',' << a.replications << ',' << a.succeeded << ',' << format_double(a.coverage)
        << ',' << format_double(a.rmse_model) << ',' << format_double(a.mae_model) << ','
        << format_double(a.rmse_mean_baseline) << ',' << format_double(a.mae_mean_baseline) << ','
        << a.model_beats_baseline << ',' << a.converged << '\n';
  }
  return out.str();
}

}  // namespace peergrade

#include "peergrade/posterior.hpp"

#include <cmath>

#include "peergrade/error.hpp"
#include "peergrade/models.hpp"

namespace peergrade {

namespace {

std::string role_name(const VariantTraits& t, int j) { return std::string(to_string(t.latents[j])); }

template <typename F>
DrawTable map_draws(const SamplerRun& run, std::vector<std::string> names, F&& f) {
  DrawTable table;
  table.names = std::move(names);
  table.chains = run.num_chains();
  table.draws_per_chain = run.num_draws();
  table.values.resize(static_cast<Eigen::Index>(table.chains) * table.draws_per_chain,
                      static_cast<Eigen::Index>(table.names.size()));
  Eigen::Index row = 0;
  for (const auto& chain : run.chains) {
    for (Eigen::Index s = 0; s < chain.draws.rows(); ++s) {
      table.values.row(row++) = f(Eigen::VectorXd(chain.draws.row(s).transpose())).transpose();
    }
  }
  return table;
}

}  // namespace

std::vector<std::string> structural_names(const ParameterLayout& layout) {
  const auto& t = layout.spec.traits();
  std::vector<std::string> names;
  const int tt = layout.num_assessments;
  if (t.ordinal) {
    for (int a = 0; a < tt; ++a) {
      for (int k = 0; k < layout.delta_width(); ++k) {
        names.push_back("delta[" + std::to_string(a + 1) + "," + std::to_string(k + 1) + "]");
      }
    }
  } else {
    for (int a = 0; a < tt; ++a) names.push_back("delta[" + std::to_string(a + 1) + "]");
  }
  if (t.piech) {
    for (const char* n : {"mu0", "gamma0", "gamma1", "gamma2", "gamma3"}) names.emplace_back(n);
    return names;
  }
  for (int j = 0; j < t.latent_dim(); ++j) {
    if (t.free_mean[j]) names.push_back("mu[" + role_name(t, j) + "]");
  }
  for (int j = 0; j < t.latent_dim(); ++j) names.push_back("sigma[" + role_name(t, j) + "]");
  for (const auto& group : t.corr_groups) {
    for (std::size_t a = 0; a < group.size(); ++a) {
      for (std::size_t b = a + 1; b < group.size(); ++b) {
        names.push_back("omega[" + role_name(t, group[a]) + "," + role_name(t, group[b]) + "]");
      }
    }
  }
  if (t.common_phi) names.emplace_back("phi");
  return names;
}

Eigen::VectorXd structural_values(const ParameterLayout& layout, const StructuralParams& s) {
  const auto& t = layout.spec.traits();
  std::vector<double> v(s.delta.data(), s.delta.data() + s.delta.size());
  if (t.piech) {
    const auto& p = s.piech;
    v.insert(v.end(), {p.mu0, p.gamma0, p.gamma1, p.gamma2, p.gamma3});
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  for (int j = 0; j < t.latent_dim(); ++j) {
    if (t.free_mean[j]) v.push_back(s.mu[j]);
  }
  for (int j = 0; j < t.latent_dim(); ++j) v.push_back(s.sigma[j]);
  Eigen::MatrixXd omega = s.correlation();
  for (const auto& group : t.corr_groups) {
    for (std::size_t a = 0; a < group.size(); ++a) {
      for (std::size_t b = a + 1; b < group.size(); ++b) v.push_back(omega(group[a], group[b]));
    }
  }
  if (t.common_phi) v.push_back(s.phi);
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<std::string> student_names(const ParameterLayout& layout) {
  const auto& t = layout.spec.traits();
  std::vector<std::string> names;
  const int n = layout.num_students;
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < layout.num_assessments; ++a) {
      names.push_back("score[" + std::to_string(i + 1) + "," + std::to_string(a + 1) + "]");
    }
  }
  if (t.has(LatentRole::Bias)) {
    for (int i = 0; i < n; ++i) names.push_back("bias[" + std::to_string(i + 1) + "]");
  }
  for (int i = 0; i < n; ++i) names.push_back("phi[" + std::to_string(i + 1) + "]");
  return names;
}

Eigen::VectorXd student_values(const ParameterLayout& layout, const StructuralParams& s,
                               const LatentParams& latents) {
  const auto& t = layout.spec.traits();
  StudentLatents sl = assemble_student_latents(layout, s, latents);
  const int n = layout.num_students;
  const int tt = layout.num_assessments;
  const int width = layout.delta_width();
  Eigen::VectorXd out(n * tt + (t.has(LatentRole::Bias) ? n : 0) + n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < tt; ++a) {
      double difficulty = s.delta.segment(a * width, width).mean();
      out[k++] = sl.theta(i, a) - difficulty;
    }
  }
  if (t.has(LatentRole::Bias)) {
    for (int i = 0; i < n; ++i) out[k++] = sl.bias[i];
  }
  for (int i = 0; i < n; ++i) out[k++] = sl.phi2[i] > 0.0 ? std::sqrt(sl.phi2[i]) : 0.0;
  return out;
}

DrawTable structural_draws(const ParameterLayout& layout, const SamplerRun& run) {
  return map_draws(run, structural_names(layout), [&](const Eigen::VectorXd& u) {
    return structural_values(layout, constrain(layout, u).structural);
  });
}

DrawTable student_draws(const ParameterLayout& layout, const SamplerRun& run) {
  return map_draws(run, student_names(layout), [&](const Eigen::VectorXd& u) {
    ConstrainedParams c = constrain(layout, u);
    return student_values(layout, c.structural, c.latents);
  });
}

Eigen::MatrixXd stacked_pointwise(const SamplerRun& run) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto& c : run.chains) {
    rows += c.pointwise_loglik.rows();
    cols = c.pointwise_loglik.cols();
  }
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& c : run.chains) {
    out.middleRows(r, c.pointwise_loglik.rows()) = c.pointwise_loglik;
    r += c.pointwise_loglik.rows();
  }
  return out;
}

Interval posterior_interval(const Eigen::VectorXd& draws, double level) {
  if (draws.size() == 0) throw Error(ErrorCode::InsufficientDraws, "no draws");
  std::vector<double> v(draws.data(), draws.data() + draws.size());
  const double tail = 0.5 * (1.0 - level);
  return {draws.mean(), quantile(v, tail), quantile(v, 1.0 - tail)};
}

Interval true_score_estimate(const DrawTable& students, int student, int assessment) {
  const int col = students.column("score[" + std::to_string(student + 1) + "," +
                                  std::to_string(assessment + 1) + "]");
  if (col < 0) {
    throw Error(ErrorCode::UnknownStudentOrAssessment,
                "no true score for student " + std::to_string(student) + ", assessment " +
                    std::to_string(assessment));
  }
  return posterior_interval(students.values.col(col));
}

double grader_variance_share(const ParameterLayout& layout, const StructuralParams& s,
                             const LatentParams& latents) {
  const auto& t = layout.spec.traits();
  const int n = layout.num_students;
  StudentLatents sl = assemble_student_latents(layout, s, latents);
  double v_e = 0.0;
  double v_g = sl.phi2.mean();
  if (t.piech) {
    v_e = 1.0 / s.piech.gamma2;
    v_g += 1.0 / s.piech.gamma3;
  } else {
    const int ability = t.role_index(LatentRole::Ability);
    const int bias = t.role_index(LatentRole::Bias);
    const int eta = t.role_index(LatentRole::LogEta2);
    v_e = s.sigma[ability] * s.sigma[ability];
    if (eta >= 0) v_e += sl.x.col(eta).array().exp().sum() / n;
    v_g += s.sigma[bias] * s.sigma[bias];
  }
  return v_g / (v_e + v_g);
}

VarianceShare variance_decomposition(const ParameterLayout& layout, const SamplerRun& run) {
  if (!layout.spec.traits().has(LatentRole::Bias)) {
    throw Error(ErrorCode::UnsupportedVariant,
                std::string(to_string(layout.spec.variant)) + " has no grader latents");
  }
  DrawTable table = map_draws(run, {"share"}, [&](const Eigen::VectorXd& u) {
    ConstrainedParams c = constrain(layout, u);
    return Eigen::VectorXd::Constant(1, grader_variance_share(layout, c.structural, c.latents));
  });
  VarianceShare out;
  out.per_draw = table.values.col(0);
  out.share = posterior_interval(out.per_draw);
  return out;
}

std::vector<std::string> FitResult::flagged() const {
  std::vector<std::string> out;
  for (const auto& s : structural_summary) {
    if (s.degenerate || !(s.rhat < 1.01) || !(s.ess_ratio > 0.10)) out.push_back(s.name);
  }
  return out;
}

FitResult fit_model(const ModelSpec& spec, const PeerGradingDataset& data,
                    const SamplerConfig& config, bool keep_pointwise) {
  spec.priors.validate();
  const int k = data.scale().is_ordinal() ? data.scale().categories : 0;
  spec.check_compatible(data.num_assessments(), k);
  FitResult fit;
  fit.layout = layout_for(spec, data.num_students(), data.num_assessments(), k);
  PosteriorDensity target(fit.layout, data);
  fit.run = sample_posterior(target, config, keep_pointwise);
  fit.structural = structural_draws(fit.layout, fit.run);
  fit.structural_summary = summarize(fit.structural);
  return fit;
}

}  // namespace peergrade

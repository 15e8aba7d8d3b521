#include "peergrade/parameter_space.hpp"

#include <algorithm>
#include <cmath>

#include "peergrade/detail/corr_transform.hpp"
#include "peergrade/error.hpp"

namespace peergrade {

namespace {

std::string corr_block_name(const VariantTraits& t, const std::vector<int>& group,
                            int nontrivial_groups) {
  if (nontrivial_groups == 1) return "corr";
  bool ability = false;
  bool bias = false;
  for (int j : group) {
    ability |= t.latents[j] == LatentRole::Ability;
    bias |= t.latents[j] == LatentRole::Bias;
  }
  if (ability && !bias) return "corr_examinee";
  if (bias && !ability) return "corr_grader";
  return "corr";
}

void add_block(ParameterLayout& layout, std::string name, int length, Transform transform,
               int corr_dim = 0, std::vector<int> members = {}) {
  if (length <= 0) return;
  layout.blocks.push_back(
      {std::move(name), layout.total_dim, length, transform, corr_dim, std::move(members)});
  layout.total_dim += length;
}

}  // namespace

std::string_view to_string(Transform t) {
  switch (t) {
    case Transform::Identity: return "identity";
    case Transform::LogExp: return "log_exp";
    case Transform::CholeskyCorr: return "cholesky_corr";
  }
  return "?";
}

const Block* ParameterLayout::find(std::string_view name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const Block& ParameterLayout::block(std::string_view name) const {
  const Block* b = find(name);
  if (!b) throw Error(ErrorCode::DimensionMismatch, "layout has no block '" + std::string(name) + "'");
  return *b;
}

nlohmann::json ParameterLayout::to_json() const {
  nlohmann::json j;
  j["model"] = model_spec_to_json(spec);
  j["num_students"] = num_students;
  j["num_assessments"] = num_assessments;
  if (num_categories > 0) j["num_categories"] = num_categories;
  j["total_dim"] = total_dim;
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : blocks) {
    nlohmann::json jb = {{"name", b.name},
                         {"offset", b.offset},
                         {"length", b.length},
                         {"transform", std::string(to_string(b.transform))}};
    if (b.transform == Transform::CholeskyCorr) {
      jb["dim"] = b.corr_dim;
      jb["members"] = b.members;
    }
    j["blocks"].push_back(jb);
  }
  return j;
}

ParameterLayout layout_for(const ModelSpec& spec, int num_students, int num_assessments,
                           int num_categories) {
  if (num_students < 2) throw Error(ErrorCode::UnsupportedCombination, "need at least 2 students");
  if (num_assessments < 1) throw Error(ErrorCode::UnsupportedCombination, "need at least 1 assessment");
  spec.check_compatible(num_assessments, num_categories);

  const auto& t = spec.traits();
  ParameterLayout layout;
  layout.spec = spec;
  layout.num_students = num_students;
  layout.num_assessments = num_assessments;
  layout.num_categories = num_categories;

  const int n = num_students;
  const int d = t.latent_dim();
  add_block(layout, "delta", num_assessments * layout.delta_width(), Transform::Identity);

  if (t.piech) {
    add_block(layout, "gamma", n * d, Transform::Identity);
    add_block(layout, "mu0", 1, Transform::Identity);
    add_block(layout, "log_gamma0", 1, Transform::LogExp);
    add_block(layout, "gamma1", 1, Transform::Identity);
    add_block(layout, "log_gamma2", 1, Transform::LogExp);
    add_block(layout, "log_gamma3", 1, Transform::LogExp);
    return layout;
  }

  add_block(layout, "mu", static_cast<int>(std::count(t.free_mean.begin(), t.free_mean.end(), true)),
            Transform::Identity);
  add_block(layout, "log_sigma", d, Transform::LogExp);
  int nontrivial = 0;
  for (const auto& g : t.corr_groups) nontrivial += g.size() > 1 ? 1 : 0;
  for (const auto& g : t.corr_groups) {
    int gd = static_cast<int>(g.size());
    add_block(layout, corr_block_name(t, g, nontrivial), gd * (gd - 1) / 2, Transform::CholeskyCorr,
              gd, g);
  }
  add_block(layout, "gamma", n * d, Transform::Identity);
  if (t.per_assessment_scores) add_block(layout, "z", n * num_assessments, Transform::Identity);
  if (t.common_phi) add_block(layout, "log_phi", 1, Transform::LogExp);
  return layout;
}

ConstrainedParams constrain(const ParameterLayout& layout, const Eigen::VectorXd& u) {
  if (u.size() != layout.total_dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "expected " + std::to_string(layout.total_dim) + " values, got " +
                    std::to_string(u.size()));
  }
  const auto& t = layout.spec.traits();
  const int n = layout.num_students;
  const int d = t.latent_dim();
  ConstrainedParams out;
  auto& s = out.structural;
  double lj = 0.0;

  const Block& delta = layout.block("delta");
  s.delta = u.segment(delta.offset, delta.length);
  s.mu = Eigen::VectorXd::Zero(d);
  s.sigma = Eigen::VectorXd::Ones(d);
  s.chol_corr = Eigen::MatrixXd::Identity(d, d);

  const Block& gamma = layout.block("gamma");
  out.latents.gamma.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out.latents.gamma(i, j) = u[gamma.offset + i * d + j];
  }

  if (t.piech) {
    auto& p = s.piech;
    p.mu0 = u[layout.block("mu0").offset];
    double l0 = u[layout.block("log_gamma0").offset];
    p.gamma1 = u[layout.block("gamma1").offset];
    double l2 = u[layout.block("log_gamma2").offset];
    double l3 = u[layout.block("log_gamma3").offset];
    p.gamma0 = std::exp(l0);
    p.gamma2 = std::exp(l2);
    p.gamma3 = std::exp(l3);
    out.log_jacobian = l0 + l2 + l3;
    return out;
  }

  if (const Block* mu = layout.find("mu")) {
    int k = 0;
    for (int j = 0; j < d; ++j) {
      if (t.free_mean[j]) s.mu[j] = u[mu->offset + k++];
    }
  }
  const Block& log_sigma = layout.block("log_sigma");
  for (int j = 0; j < d; ++j) {
    double v = u[log_sigma.offset + j];
    s.sigma[j] = std::exp(v);
    lj += v;
  }
  for (const auto& b : layout.blocks) {
    if (b.transform != Transform::CholeskyCorr) continue;
    int gd = b.corr_dim;
    std::vector<double> chol(gd * gd);
    auto jac = detail::cholesky_corr_constrain(u.data() + b.offset, gd, chol.data());
    lj += jac.to_correlation;
    for (int a = 0; a < gd; ++a) {
      for (int c = 0; c <= a; ++c) s.chol_corr(b.members[a], b.members[c]) = chol[a * gd + c];
    }
  }
  if (const Block* z = layout.find("z")) {
    const int tt = layout.num_assessments;
    out.latents.z.resize(n, tt);
    for (int i = 0; i < n; ++i) {
      for (int a = 0; a < tt; ++a) out.latents.z(i, a) = u[z->offset + i * tt + a];
    }
  }
  if (const Block* lp = layout.find("log_phi")) {
    double v = u[lp->offset];
    s.phi = std::exp(v);
    lj += v;
  }
  out.log_jacobian = lj;
  return out;
}

Eigen::VectorXd unconstrain(const ParameterLayout& layout, const StructuralParams& s,
                            const LatentParams& latents) {
  const auto& t = layout.spec.traits();
  const int n = layout.num_students;
  const int d = t.latent_dim();
  Eigen::VectorXd u(layout.total_dim);

  const Block& delta = layout.block("delta");
  if (s.delta.size() != delta.length) throw Error(ErrorCode::DimensionMismatch, "delta length");
  u.segment(delta.offset, delta.length) = s.delta;
  const Block& gamma = layout.block("gamma");
  if (latents.gamma.rows() != n || latents.gamma.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "gamma shape");
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) u[gamma.offset + i * d + j] = latents.gamma(i, j);
  }

  if (t.piech) {
    u[layout.block("mu0").offset] = s.piech.mu0;
    u[layout.block("log_gamma0").offset] = std::log(s.piech.gamma0);
    u[layout.block("gamma1").offset] = s.piech.gamma1;
    u[layout.block("log_gamma2").offset] = std::log(s.piech.gamma2);
    u[layout.block("log_gamma3").offset] = std::log(s.piech.gamma3);
    return u;
  }

  if (const Block* mu = layout.find("mu")) {
    int k = 0;
    for (int j = 0; j < d; ++j) {
      if (t.free_mean[j]) u[mu->offset + k++] = s.mu[j];
    }
  }
  const Block& log_sigma = layout.block("log_sigma");
  for (int j = 0; j < d; ++j) u[log_sigma.offset + j] = std::log(s.sigma[j]);
  for (const auto& b : layout.blocks) {
    if (b.transform != Transform::CholeskyCorr) continue;
    int gd = b.corr_dim;
    std::vector<double> chol(gd * gd, 0.0);
    for (int a = 0; a < gd; ++a) {
      for (int c = 0; c <= a; ++c) chol[a * gd + c] = s.chol_corr(b.members[a], b.members[c]);
    }
    detail::cholesky_corr_free(chol.data(), gd, u.data() + b.offset);
  }
  if (const Block* z = layout.find("z")) {
    const int tt = layout.num_assessments;
    if (latents.z.rows() != n || latents.z.cols() != tt) throw Error(ErrorCode::DimensionMismatch, "z shape");
    for (int i = 0; i < n; ++i) {
      for (int a = 0; a < tt; ++a) u[z->offset + i * tt + a] = latents.z(i, a);
    }
  }
  if (const Block* lp = layout.find("log_phi")) u[lp->offset] = std::log(s.phi);
  return u;
}

StudentLatents assemble_student_latents(const ParameterLayout& layout, const StructuralParams& s,
                                        const LatentParams& latents) {
  const auto& t = layout.spec.traits();
  const int n = layout.num_students;
  const int tt = layout.num_assessments;
  StudentLatents out;
  out.theta.resize(n, tt);
  out.bias = Eigen::VectorXd::Zero(n);
  out.phi2.resize(n);

  if (t.piech) {
    const auto& p = s.piech;
    out.x.resize(n, 2);
    for (int i = 0; i < n; ++i) {
      out.x(i, 0) = p.mu0 + latents.gamma(i, 0) / std::sqrt(p.gamma2);
      out.x(i, 1) = latents.gamma(i, 1) / std::sqrt(p.gamma3);
      out.theta.row(i).setConstant(out.x(i, 0));
      out.bias[i] = out.x(i, 1);
    }
    for (int g = 0; g < n; ++g) out.phi2[g] = 1.0 / (p.gamma0 + p.gamma1 * out.x(g, 0));
    return out;
  }

  // x_i = mu + S (L gamma_i)
  Eigen::MatrixXd w = latents.gamma * s.chol_corr.transpose();
  out.x = (w * s.sigma.asDiagonal()).rowwise() + s.mu.transpose();

  const auto lambda = layout.spec.resolved_time_codes(tt);
  const int ability = t.role_index(LatentRole::Ability);
  const int slope = t.role_index(LatentRole::Slope);
  const int curve = t.role_index(LatentRole::Curvature);
  const int log_eta2 = t.role_index(LatentRole::LogEta2);
  const int bias = t.role_index(LatentRole::Bias);
  const int log_phi2 = t.role_index(LatentRole::LogPhi2);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < tt; ++a) {
      double v = out.x(i, ability);
      if (slope >= 0) v += lambda[a] * out.x(i, slope);
      if (curve >= 0) v += lambda[a] * lambda[a] * out.x(i, curve);
      if (t.per_assessment_scores) v += std::exp(0.5 * out.x(i, log_eta2)) * latents.z(i, a);
      out.theta(i, a) = v;
    }
    if (bias >= 0) out.bias[i] = out.x(i, bias);
    out.phi2[i] = log_phi2 >= 0 ? std::exp(out.x(i, log_phi2)) : s.phi * s.phi;
  }
  return out;
}

}  // namespace peergrade

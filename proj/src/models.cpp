#include "peergrade/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "peergrade/detail/corr_transform.hpp"
#include "peergrade/detail/dual.hpp"
#include "peergrade/error.hpp"

namespace peergrade {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kMaxLatent = 8;

double normal_lpdf(double x, double loc, double sd) {
  double z = (x - loc) / sd;
  return -kHalfLog2Pi - std::log(sd) - 0.5 * z * z;
}

double lkj_log_normalizer(int d, double eta) {
  double c = 0.0;
  for (int k = 1; k <= d - 1; ++k) {
    double b = eta + 0.5 * (d - k - 1);
    double log_beta = 2.0 * std::lgamma(b) - std::lgamma(2.0 * b);
    c += (2.0 * eta - 2.0 + d - k) * (d - k) * std::log(2.0) + (d - k) * log_beta;
  }
  return c;
}

// Log partial-credit probability of category index `c` (0-based) and, optionally, its
// derivatives with respect to a = theta + beta, each threshold, and the log residual
// variance lv (phi = exp(lv / 2)).
double pcm_logp(double a, const double* thresholds, int k, double phi, int c, double* d_a,
                double* d_thresholds, double* d_lv, std::vector<double>& scratch) {
  scratch.resize(2 * k);
  double* logits = scratch.data();
  double* probs = scratch.data() + k;
  logits[0] = 0.0;
  double max_logit = 0.0;
  for (int j = 1; j < k; ++j) {
    logits[j] = logits[j - 1] + (a - thresholds[j - 1]) / phi;
    max_logit = std::max(max_logit, logits[j]);
  }
  double sum = 0.0;
  for (int j = 0; j < k; ++j) {
    probs[j] = std::exp(logits[j] - max_logit);
    sum += probs[j];
  }
  double log_norm = max_logit + std::log(sum);
  for (int j = 0; j < k; ++j) probs[j] /= sum;
  if (d_a) {
    double mean_index = 0.0;
    double mean_logit = 0.0;
    for (int j = 0; j < k; ++j) {
      mean_index += j * probs[j];
      mean_logit += logits[j] * probs[j];
    }
    *d_a = (c - mean_index) / phi;
    *d_lv = -0.5 * (logits[c] - mean_logit);
    double tail = 0.0;  // P(category index >= l + 1)
    for (int l = k - 2; l >= 0; --l) {
      tail += probs[l + 1];
      d_thresholds[l] = -((c >= l + 1 ? 1.0 : 0.0) - tail) / phi;
    }
  }
  return logits[c] - log_norm;
}

struct Workspace {
  std::vector<double> w, x, theta, eta, lv, inv_v, bias;
  std::vector<double> g_theta, g_x, g_bias, g_lv;
  std::vector<double> scratch, d_thresholds;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

void assign_zero(std::vector<double>& v, std::size_t n) { v.assign(n, 0.0); }

}  // namespace

double lkj_log_density(const Eigen::MatrixXd& chol, double shape) {
  const int d = static_cast<int>(chol.rows());
  double log_det = 0.0;
  for (int i = 0; i < d; ++i) log_det += 2.0 * std::log(chol(i, i));
  return (shape - 1.0) * log_det - lkj_log_normalizer(d, shape);
}

Eigen::VectorXd pcm_probs(double theta, double beta, double phi, std::span<const double> thresholds) {
  if (!(phi > 0.0)) throw Error(ErrorCode::NonPositivePhi, "pcm_probs requires phi > 0");
  const int k = static_cast<int>(thresholds.size()) + 1;
  Eigen::VectorXd logits(k);
  logits[0] = 0.0;
  for (int j = 1; j < k; ++j) logits[j] = logits[j - 1] + (theta + beta - thresholds[j - 1]) / phi;
  double max_logit = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - max_logit).exp();
  return p / p.sum();
}

void check_dataset_matches(const ParameterLayout& layout, const PeerGradingDataset& data) {
  if (data.num_students() != layout.num_students ||
      data.num_assessments() != layout.num_assessments) {
    throw Error(ErrorCode::DimensionMismatch, "dataset shape does not match the parameter layout");
  }
  const bool ordinal = layout.spec.traits().ordinal;
  if (ordinal != data.scale().is_ordinal() ||
      (ordinal && data.scale().categories != layout.num_categories)) {
    throw Error(ErrorCode::UnsupportedCombination, "dataset scale does not match the model");
  }
}

Eigen::VectorXd log_likelihood_pointwise(const ParameterLayout& layout,
                                         const StructuralParams& structural,
                                         const LatentParams& latents,
                                         const PeerGradingDataset& data) {
  check_dataset_matches(layout, data);
  const auto& t = layout.spec.traits();
  StudentLatents sl = assemble_student_latents(layout, structural, latents);
  const int width = layout.delta_width();
  Eigen::VectorXd out(data.size());
  std::vector<double> thresholds(width);
  int idx = 0;
  for (const auto& e : data.edges()) {
    double var = sl.phi2[e.grader];
    if (t.piech && !(var > 0.0 && std::isfinite(var))) {
      throw Error(ErrorCode::PrecisionNotPositive, "Piech precision gamma0 + gamma1 theta_g <= 0");
    }
    if (!(var > 0.0) || !std::isfinite(var)) {
      throw Error(ErrorCode::NonPositiveVariance, "grader residual variance is not positive");
    }
    double theta = sl.theta(e.examinee, e.assessment);
    double beta = sl.bias[e.grader];
    if (t.ordinal) {
      for (int l = 0; l < width; ++l) thresholds[l] = structural.delta[e.assessment * width + l];
      Eigen::VectorXd p = pcm_probs(theta, beta, std::sqrt(var), thresholds);
      out[idx++] = std::log(p[static_cast<int>(e.grade) - 1]);
    } else {
      double r = e.grade - (theta + beta - structural.delta[e.assessment]);
      out[idx++] = -kHalfLog2Pi - 0.5 * std::log(var) - 0.5 * r * r / var;
    }
  }
  return out;
}

double log_prior(const ParameterLayout& layout, const StructuralParams& s,
                 const LatentParams& latents) {
  const auto& t = layout.spec.traits();
  const auto& pri = layout.spec.priors;
  double lp = 0.0;
  for (Eigen::Index i = 0; i < s.delta.size(); ++i) {
    lp += normal_lpdf(s.delta[i], pri.delta.loc, pri.delta.sd);
  }
  for (Eigen::Index i = 0; i < latents.gamma.size(); ++i) {
    lp += -kHalfLog2Pi - 0.5 * latents.gamma.data()[i] * latents.gamma.data()[i];
  }
  for (Eigen::Index i = 0; i < latents.z.size(); ++i) {
    lp += -kHalfLog2Pi - 0.5 * latents.z.data()[i] * latents.z.data()[i];
  }

  if (t.piech) {
    const auto& p = s.piech;
    lp += normal_lpdf(p.mu0, pri.mu.loc, pri.mu.sd);
    lp += normal_lpdf(p.gamma1, pri.mu.loc, pri.mu.sd);
    lp += pri.scale.log_density(p.gamma0) + pri.scale.log_density(p.gamma2) +
          pri.scale.log_density(p.gamma3);
    for (int g = 0; g < layout.num_students; ++g) {
      double theta_g = p.mu0 + latents.gamma(g, 0) / std::sqrt(p.gamma2);
      if (!(p.gamma0 + p.gamma1 * theta_g > 0.0)) return kNegInf;
    }
    return lp;
  }

  for (int j = 0; j < t.latent_dim(); ++j) {
    if (t.free_mean[j]) lp += normal_lpdf(s.mu[j], pri.mu.loc, pri.mu.sd);
    lp += pri.scale.log_density(s.sigma[j]);
  }
  for (const auto& b : layout.blocks) {
    if (b.transform != Transform::CholeskyCorr) continue;
    Eigen::MatrixXd chol(b.corr_dim, b.corr_dim);
    for (int a = 0; a < b.corr_dim; ++a) {
      for (int c = 0; c < b.corr_dim; ++c) chol(a, c) = s.chol_corr(b.members[a], b.members[c]);
    }
    lp += lkj_log_density(chol, pri.lkj_shape);
  }
  if (t.common_phi) lp += pri.scale.log_density(s.phi);
  return lp;
}

PosteriorDensity::PosteriorDensity(ParameterLayout layout, const PeerGradingDataset& data)
    : layout_(std::move(layout)), edges_(data.edges()) {
  check_dataset_matches(layout_, data);
  time_codes_ = layout_.spec.resolved_time_codes(layout_.num_assessments);
  if (layout_.spec.traits().latent_dim() > kMaxLatent) {
    throw Error(ErrorCode::UnsupportedCombination, "latent dimension too large");
  }
}

double PosteriorDensity::operator()(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const {
  grad.resize(layout_.total_dim);
  return compute(u, grad.data(), nullptr, nullptr);
}

double PosteriorDensity::log_density(const Eigen::VectorXd& u) const {
  return compute(u, nullptr, nullptr, nullptr);
}

LogDensityResult PosteriorDensity::evaluate(const Eigen::VectorXd& u) const {
  LogDensityResult r;
  r.gradient.resize(layout_.total_dim);
  r.pointwise_loglik.resize(num_observations());
  Terms terms;
  r.log_posterior = compute(u, r.gradient.data(), r.pointwise_loglik.data(), &terms);
  r.log_prior = terms.prior;
  r.log_likelihood = terms.likelihood;
  r.log_jacobian = terms.jacobian;
  return r;
}

Eigen::VectorXd PosteriorDensity::pointwise(const Eigen::VectorXd& u) const {
  Eigen::VectorXd pw(num_observations());
  compute(u, nullptr, pw.data(), nullptr);
  return pw;
}

double PosteriorDensity::compute(const Eigen::VectorXd& u, double* grad, double* pointwise,
                                 Terms* terms) const {
  if (u.size() != layout_.total_dim) {
    throw Error(ErrorCode::DimensionMismatch, "unconstrained vector has the wrong length");
  }
  if (grad) std::fill(grad, grad + layout_.total_dim, 0.0);
  Terms local;
  double lp = layout_.spec.traits().piech ? compute_piech(u, grad, pointwise, local)
                                          : compute_latent_model(u, grad, pointwise, local);
  if (terms) *terms = local;
  if (std::isnan(lp)) lp = kNegInf;
  if (lp == kNegInf && grad) std::fill(grad, grad + layout_.total_dim, 0.0);
  return lp;
}

double PosteriorDensity::compute_latent_model(const Eigen::VectorXd& u, double* grad,
                                              double* pointwise, Terms& terms) const {
  const auto& t = layout_.spec.traits();
  const auto& pri = layout_.spec.priors;
  const int n = layout_.num_students;
  const int tt = layout_.num_assessments;
  const int d = t.latent_dim();
  const int width = layout_.delta_width();
  const int k_cat = layout_.num_categories;
  const double* uu = u.data();
  Workspace& ws = workspace();

  const Block& b_delta = layout_.block("delta");
  const Block& b_sigma = layout_.block("log_sigma");
  const Block& b_gamma = layout_.block("gamma");
  const Block* b_mu = layout_.find("mu");
  const Block* b_z = layout_.find("z");
  const Block* b_phi = layout_.find("log_phi");
  const double* delta = uu + b_delta.offset;
  const double* gamma = uu + b_gamma.offset;
  const double* z = b_z ? uu + b_z->offset : nullptr;

  double lp = 0.0;
  double lj = 0.0;
  double lprior = 0.0;

  // Structural parameters.
  double mu[kMaxLatent] = {};
  double sigma[kMaxLatent];
  double chol[kMaxLatent * kMaxLatent] = {};
  int mu_slot[kMaxLatent];
  {
    int k = 0;
    for (int j = 0; j < d; ++j) {
      mu_slot[j] = t.free_mean[j] ? k++ : -1;
      if (mu_slot[j] >= 0) mu[j] = uu[b_mu->offset + mu_slot[j]];
    }
  }
  for (int j = 0; j < d; ++j) {
    double s = uu[b_sigma.offset + j];
    sigma[j] = std::exp(s);
    lj += s;
    chol[j * d + j] = 1.0;
  }
  for (const auto& b : layout_.blocks) {
    if (b.transform != Transform::CholeskyCorr) continue;
    const int gd = b.corr_dim;
    double local[kMaxLatent * kMaxLatent];
    auto jac = detail::cholesky_corr_constrain(uu + b.offset, gd, local);
    lj += jac.to_correlation;
    double log_det = 0.0;
    for (int a = 0; a < gd; ++a) {
      log_det += 2.0 * std::log(local[a * gd + a]);
      for (int c = 0; c <= a; ++c) chol[b.members[a] * d + b.members[c]] = local[a * gd + c];
    }
    lprior += (pri.lkj_shape - 1.0) * log_det - lkj_log_normalizer(gd, pri.lkj_shape);
  }
  double log_phi_common = 0.0;
  if (b_phi) {
    log_phi_common = uu[b_phi->offset];
    lj += log_phi_common;
  }

  // Student latents: w_i = L gamma_i, x_i = mu + sigma * w_i.
  ws.w.resize(n * d);
  ws.x.resize(n * d);
  for (int i = 0; i < n; ++i) {
    const double* gi = gamma + i * d;
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int c = 0; c <= j; ++c) acc += chol[j * d + c] * gi[c];
      ws.w[i * d + j] = acc;
      ws.x[i * d + j] = mu[j] + sigma[j] * acc;
    }
  }

  const int r_ability = t.role_index(LatentRole::Ability);
  const int r_slope = t.role_index(LatentRole::Slope);
  const int r_curve = t.role_index(LatentRole::Curvature);
  const int r_bias = t.role_index(LatentRole::Bias);
  const int r_eta = t.role_index(LatentRole::LogEta2);
  const int r_phi = t.role_index(LatentRole::LogPhi2);

  ws.theta.resize(n * tt);
  ws.eta.resize(n);
  ws.lv.resize(n);
  ws.inv_v.resize(n);
  ws.bias.resize(n);
  for (int i = 0; i < n; ++i) {
    const double* xi = ws.x.data() + i * d;
    double eta = r_eta >= 0 ? std::exp(0.5 * xi[r_eta]) : 0.0;
    ws.eta[i] = eta;
    for (int a = 0; a < tt; ++a) {
      double v = xi[r_ability];
      if (r_slope >= 0) v += time_codes_[a] * xi[r_slope];
      if (r_curve >= 0) v += time_codes_[a] * time_codes_[a] * xi[r_curve];
      if (z) v += eta * z[i * tt + a];
      ws.theta[i * tt + a] = v;
    }
    ws.bias[i] = r_bias >= 0 ? xi[r_bias] : 0.0;
    ws.lv[i] = r_phi >= 0 ? xi[r_phi] : 2.0 * log_phi_common;
    ws.inv_v[i] = std::exp(-ws.lv[i]);
  }

  // Likelihood.
  const bool want_grad = grad != nullptr;
  if (want_grad) {
    assign_zero(ws.g_theta, n * tt);
    assign_zero(ws.g_bias, n);
    assign_zero(ws.g_lv, n);
  }
  double* g_delta = want_grad ? grad + b_delta.offset : nullptr;
  double ll = 0.0;
  if (t.ordinal) {
    ws.d_thresholds.resize(width);
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const Edge& ed = edges_[e];
      const int ia = ed.examinee * tt + ed.assessment;
      double a = ws.theta[ia] + ws.bias[ed.grader];
      double phi = std::exp(0.5 * ws.lv[ed.grader]);
      double d_a = 0.0;
      double d_lv = 0.0;
      double lpe = pcm_logp(a, delta + ed.assessment * width, k_cat, phi,
                            static_cast<int>(ed.grade) - 1, want_grad ? &d_a : nullptr,
                            ws.d_thresholds.data(), &d_lv, ws.scratch);
      ll += lpe;
      if (pointwise) pointwise[e] = lpe;
      if (want_grad) {
        ws.g_theta[ia] += d_a;
        ws.g_bias[ed.grader] += d_a;
        ws.g_lv[ed.grader] += d_lv;
        for (int l = 0; l < width; ++l) g_delta[ed.assessment * width + l] += ws.d_thresholds[l];
      }
    }
  } else {
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const Edge& ed = edges_[e];
      const int ia = ed.examinee * tt + ed.assessment;
      const double iv = ws.inv_v[ed.grader];
      double r = ed.grade - ws.theta[ia] - ws.bias[ed.grader] + delta[ed.assessment];
      double lpe = -kHalfLog2Pi - 0.5 * ws.lv[ed.grader] - 0.5 * r * r * iv;
      ll += lpe;
      if (pointwise) pointwise[e] = lpe;
      if (want_grad) {
        double gr = r * iv;
        ws.g_theta[ia] += gr;
        ws.g_bias[ed.grader] += gr;
        g_delta[ed.assessment] -= gr;
        ws.g_lv[ed.grader] += 0.5 * (r * gr - 1.0);
      }
    }
  }

  // Non-centered deviates.
  double sum_sq = 0.0;
  for (int i = 0; i < n * d; ++i) sum_sq += gamma[i] * gamma[i];
  int deviates = n * d;
  if (z) {
    for (int i = 0; i < n * tt; ++i) sum_sq += z[i] * z[i];
    deviates += n * tt;
  }
  lprior += -0.5 * sum_sq - deviates * kHalfLog2Pi;

  // Structural priors.
  for (int a = 0; a < b_delta.length; ++a) lprior += normal_lpdf(delta[a], pri.delta.loc, pri.delta.sd);
  for (int j = 0; j < d; ++j) {
    if (mu_slot[j] >= 0) lprior += normal_lpdf(mu[j], pri.mu.loc, pri.mu.sd);
    lprior += pri.scale.log_density(sigma[j]);
  }
  const double phi_common = b_phi ? std::exp(log_phi_common) : 0.0;
  if (b_phi) lprior += pri.scale.log_density(phi_common);

  lp = lprior + ll + lj;
  terms.prior = lprior;
  terms.likelihood = ll;
  terms.jacobian = lj;
  if (!want_grad) return lp;

  // Backward pass: true scores -> latent vectors and z.
  assign_zero(ws.g_x, n * d);
  double g_log_phi_common = 0.0;
  double* g_z = z ? grad + b_z->offset : nullptr;
  for (int i = 0; i < n; ++i) {
    double* gxi = ws.g_x.data() + i * d;
    for (int a = 0; a < tt; ++a) {
      double gt = ws.g_theta[i * tt + a];
      gxi[r_ability] += gt;
      if (r_slope >= 0) gxi[r_slope] += time_codes_[a] * gt;
      if (r_curve >= 0) gxi[r_curve] += time_codes_[a] * time_codes_[a] * gt;
      if (z) {
        g_z[i * tt + a] += ws.eta[i] * gt - z[i * tt + a];
        gxi[r_eta] += 0.5 * ws.eta[i] * z[i * tt + a] * gt;
      }
    }
    if (r_bias >= 0) gxi[r_bias] += ws.g_bias[i];
    if (r_phi >= 0) {
      gxi[r_phi] += ws.g_lv[i];
    } else {
      g_log_phi_common += 2.0 * ws.g_lv[i];
    }
  }

  // x_i = mu + sigma * (L gamma_i).
  double g_chol[kMaxLatent * kMaxLatent] = {};
  double* g_gamma = grad + b_gamma.offset;
  double* g_sigma = grad + b_sigma.offset;
  for (int i = 0; i < n; ++i) {
    const double* gxi = ws.g_x.data() + i * d;
    const double* gi = gamma + i * d;
    const double* wi = ws.w.data() + i * d;
    double* ggi = g_gamma + i * d;
    for (int j = 0; j < d; ++j) {
      double h = sigma[j] * gxi[j];
      if (mu_slot[j] >= 0) grad[b_mu->offset + mu_slot[j]] += gxi[j];
      g_sigma[j] += h * wi[j];
      for (int c = 0; c <= j; ++c) {
        ggi[c] += chol[j * d + c] * h;
        g_chol[j * d + c] += h * gi[c];
      }
    }
    for (int c = 0; c < d; ++c) ggi[c] -= gi[c];
  }

  for (int a = 0; a < b_delta.length; ++a) {
    g_delta[a] -= (delta[a] - pri.delta.loc) / (pri.delta.sd * pri.delta.sd);
  }
  for (int j = 0; j < d; ++j) {
    if (mu_slot[j] >= 0) {
      grad[b_mu->offset + mu_slot[j]] -= (mu[j] - pri.mu.loc) / (pri.mu.sd * pri.mu.sd);
    }
    g_sigma[j] += sigma[j] * pri.scale.dlog_density(sigma[j]) + 1.0;
  }
  if (b_phi) {
    grad[b_phi->offset] +=
        g_log_phi_common + phi_common * pri.scale.dlog_density(phi_common) + 1.0;
  }

  // Correlation blocks: forward-mode through the tanh/Cholesky construction.
  for (const auto& b : layout_.blocks) {
    if (b.transform != Transform::CholeskyCorr) continue;
    const int gd = b.corr_dim;
    detail::Dual ud[kMaxLatent * (kMaxLatent - 1) / 2];
    detail::Dual local[kMaxLatent * kMaxLatent];
    for (int k = 0; k < b.length; ++k) ud[k] = detail::Dual(uu[b.offset + k]);
    for (int k = 0; k < b.length; ++k) {
      ud[k].d = 1.0;
      auto jac = detail::cholesky_corr_constrain(ud, gd, local);
      double g = jac.to_correlation.d;
      for (int a = 0; a < gd; ++a) {
        g += (pri.lkj_shape - 1.0) * 2.0 * local[a * gd + a].d / local[a * gd + a].v;
        for (int c = 0; c <= a; ++c) {
          g += g_chol[b.members[a] * d + b.members[c]] * local[a * gd + c].d;
        }
      }
      grad[b.offset + k] += g;
      ud[k].d = 0.0;
    }
  }
  return lp;
}

double PosteriorDensity::compute_piech(const Eigen::VectorXd& u, double* grad, double* pointwise,
                                       Terms& terms) const {
  const auto& pri = layout_.spec.priors;
  const int n = layout_.num_students;
  const double* uu = u.data();
  Workspace& ws = workspace();

  const Block& b_delta = layout_.block("delta");
  const Block& b_gamma = layout_.block("gamma");
  const int o_mu0 = layout_.block("mu0").offset;
  const int o_l0 = layout_.block("log_gamma0").offset;
  const int o_g1 = layout_.block("gamma1").offset;
  const int o_l2 = layout_.block("log_gamma2").offset;
  const int o_l3 = layout_.block("log_gamma3").offset;
  const double* delta = uu + b_delta.offset;
  const double* dev = uu + b_gamma.offset;  // (u_i, v_i) per student

  const double mu0 = uu[o_mu0];
  const double gamma0 = std::exp(uu[o_l0]);
  const double gamma1 = uu[o_g1];
  const double gamma2 = std::exp(uu[o_l2]);
  const double gamma3 = std::exp(uu[o_l3]);
  const double sd_theta = 1.0 / std::sqrt(gamma2);
  const double sd_beta = 1.0 / std::sqrt(gamma3);
  terms.jacobian = uu[o_l0] + uu[o_l2] + uu[o_l3];

  ws.theta.resize(n);
  ws.bias.resize(n);
  ws.inv_v.resize(n);  // precision
  for (int i = 0; i < n; ++i) {
    ws.theta[i] = mu0 + sd_theta * dev[2 * i];
    ws.bias[i] = sd_beta * dev[2 * i + 1];
    double prec = gamma0 + gamma1 * ws.theta[i];
    if (!(prec > 0.0)) {
      terms.prior = kNegInf;
      if (pointwise) std::fill(pointwise, pointwise + edges_.size(), kNegInf);
      return kNegInf;
    }
    ws.inv_v[i] = prec;
  }

  const bool want_grad = grad != nullptr;
  if (want_grad) {
    assign_zero(ws.g_theta, n);
    assign_zero(ws.g_bias, n);
    assign_zero(ws.g_lv, n);  // d/d precision
  }
  double ll = 0.0;
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const Edge& ed = edges_[e];
    const double prec = ws.inv_v[ed.grader];
    double r = ed.grade - ws.theta[ed.examinee] - ws.bias[ed.grader] + delta[ed.assessment];
    double lpe = -kHalfLog2Pi + 0.5 * std::log(prec) - 0.5 * prec * r * r;
    ll += lpe;
    if (pointwise) pointwise[e] = lpe;
    if (want_grad) {
      double gr = prec * r;
      ws.g_theta[ed.examinee] += gr;
      ws.g_bias[ed.grader] += gr;
      grad[b_delta.offset + ed.assessment] -= gr;
      ws.g_lv[ed.grader] += 0.5 / prec - 0.5 * r * r;
    }
  }

  double lprior = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < 2 * n; ++i) sum_sq += dev[i] * dev[i];
  lprior += -0.5 * sum_sq - 2 * n * kHalfLog2Pi;
  for (int a = 0; a < b_delta.length; ++a) lprior += normal_lpdf(delta[a], pri.delta.loc, pri.delta.sd);
  lprior += normal_lpdf(mu0, pri.mu.loc, pri.mu.sd) + normal_lpdf(gamma1, pri.mu.loc, pri.mu.sd);
  lprior += pri.scale.log_density(gamma0) + pri.scale.log_density(gamma2) +
            pri.scale.log_density(gamma3);

  terms.prior = lprior;
  terms.likelihood = ll;
  const double lp = lprior + ll + terms.jacobian;
  if (!want_grad) return lp;

  double g_gamma0 = 0.0;
  double g_gamma1 = 0.0;
  for (int g = 0; g < n; ++g) {
    g_gamma0 += ws.g_lv[g];
    g_gamma1 += ws.theta[g] * ws.g_lv[g];
    ws.g_theta[g] += gamma1 * ws.g_lv[g];
  }
  double g_mu0 = 0.0;
  double g_l2 = 0.0;
  double g_l3 = 0.0;
  double* g_dev = grad + b_gamma.offset;
  for (int i = 0; i < n; ++i) {
    g_mu0 += ws.g_theta[i];
    g_dev[2 * i] += sd_theta * ws.g_theta[i] - dev[2 * i];
    g_l2 += -0.5 * (ws.theta[i] - mu0) * ws.g_theta[i];
    g_dev[2 * i + 1] += sd_beta * ws.g_bias[i] - dev[2 * i + 1];
    g_l3 += -0.5 * ws.bias[i] * ws.g_bias[i];
  }
  for (int a = 0; a < b_delta.length; ++a) {
    grad[b_delta.offset + a] -= (delta[a] - pri.delta.loc) / (pri.delta.sd * pri.delta.sd);
  }
  const double mu_var = pri.mu.sd * pri.mu.sd;
  grad[o_mu0] += g_mu0 - (mu0 - pri.mu.loc) / mu_var;
  grad[o_g1] += g_gamma1 - (gamma1 - pri.mu.loc) / mu_var;
  grad[o_l0] += gamma0 * (g_gamma0 + pri.scale.dlog_density(gamma0)) + 1.0;
  grad[o_l2] += g_l2 + gamma2 * pri.scale.dlog_density(gamma2) + 1.0;
  grad[o_l3] += g_l3 + gamma3 * pri.scale.dlog_density(gamma3) + 1.0;
  return lp;
}

LogDensityResult log_posterior_with_gradient(const ParameterLayout& layout,
                                             const Eigen::VectorXd& u,
                                             const PeerGradingDataset& data) {
  return PosteriorDensity(layout, data).evaluate(u);
}

}  // namespace peergrade

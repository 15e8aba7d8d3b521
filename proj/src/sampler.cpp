#include "peergrade/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "peergrade/error.hpp"

namespace peergrade {

namespace {

constexpr double kMaxDeltaH = 1000.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric) {
  return -z.log_density + 0.5 * z.p.dot(inv_metric.cwiseProduct(z.p));
}

void sample_momentum(PhasePoint& z, const Eigen::VectorXd& inv_metric, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < z.p.size(); ++i) z.p[i] = normal(rng) / std::sqrt(inv_metric[i]);
}

double uniform01(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
               const Eigen::VectorXd& rho) {
  return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
}

class Nuts {
 public:
  Nuts(const LogDensityFn& f, double step, const Eigen::VectorXd& inv_metric, int max_depth,
       std::mt19937_64& rng)
      : f_(f), step_(step), inv_metric_(inv_metric), max_depth_(max_depth), rng_(rng) {}

  TransitionStats transition(PhasePoint& start) {
    z_ = start;
    sample_momentum(z_, inv_metric_, rng_);
    const int n = static_cast<int>(z_.q.size());

    PhasePoint z_fwd = z_;
    PhasePoint z_bck = z_;
    PhasePoint z_sample = z_;
    PhasePoint z_propose = z_;

    Eigen::VectorXd p_fwd_fwd = z_.p;
    Eigen::VectorXd p_sharp_fwd_fwd = inv_metric_.cwiseProduct(z_.p);
    Eigen::VectorXd p_fwd_bck = z_.p;
    Eigen::VectorXd p_sharp_fwd_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_fwd = z_.p;
    Eigen::VectorXd p_sharp_bck_fwd = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_bck = z_.p;
    Eigen::VectorXd p_sharp_bck_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd rho = z_.p;

    double log_sum_weight = 0.0;
    const double h0 = hamiltonian(z_, inv_metric_);
    n_leapfrog_ = 0;
    sum_metro_prob_ = 0.0;
    divergent_ = false;
    int depth = 0;

    do {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(n);
      bool valid_subtree = false;
      double log_sum_weight_subtree = -kInf;

      if (uniform01(rng_) > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid_subtree = build_tree(depth, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd,
                                   p_fwd_bck, p_fwd_fwd, h0, 1.0, log_sum_weight_subtree);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid_subtree = build_tree(depth, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck,
                                   p_bck_fwd, p_bck_bck, h0, -1.0, log_sum_weight_subtree);
        z_bck = z_;
      }
      if (!valid_subtree) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform01(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      Eigen::VectorXd rho_extended = rho_bck + p_fwd_bck;
      persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_extended);
      rho_extended = rho_fwd + p_bck_fwd;
      persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_extended);
      if (!persist) break;
    } while (depth < max_depth_);

    TransitionStats s;
    s.accept_stat = n_leapfrog_ > 0 ? sum_metro_prob_ / n_leapfrog_ : 0.0;
    s.tree_depth = depth;
    s.n_leapfrog = n_leapfrog_;
    s.divergent = divergent_;
    start = z_sample;
    s.energy = hamiltonian(start, inv_metric_);
    s.log_density = start.log_density;
    return s;
  }

 private:
  bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg,
                  Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                  Eigen::VectorXd& p_end, double h0, double sign, double& log_sum_weight) {
    if (depth == 0) {
      leapfrog(f_, z_, sign * step_, inv_metric_);
      ++n_leapfrog_;
      double h = hamiltonian(z_, inv_metric_);
      if (std::isnan(h)) h = kInf;
      if (h - h0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob_ += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
      z_propose = z_;
      p_sharp_beg = inv_metric_.cwiseProduct(z_.p);
      p_sharp_end = p_sharp_beg;
      rho += z_.p;
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }

    const Eigen::Index n = z_.q.size();
    double log_sum_weight_init = -kInf;
    Eigen::VectorXd p_init_end(n);
    Eigen::VectorXd p_sharp_init_end(n);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(n);
    if (!build_tree(depth - 1, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                    p_init_end, h0, sign, log_sum_weight_init)) {
      return false;
    }

    PhasePoint z_propose_final = z_;
    double log_sum_weight_final = -kInf;
    Eigen::VectorXd p_final_beg(n);
    Eigen::VectorXd p_sharp_final_beg(n);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(n);
    if (!build_tree(depth - 1, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                    p_final_beg, p_end, h0, sign, log_sum_weight_final)) {
      return false;
    }

    double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (uniform01(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
    Eigen::VectorXd rho_extended = rho_init + p_final_beg;
    persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_extended);
    rho_extended = rho_final + p_init_end;
    persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_extended);
    return persist;
  }

  const LogDensityFn& f_;
  double step_;
  const Eigen::VectorXd& inv_metric_;
  int max_depth_;
  std::mt19937_64& rng_;
  PhasePoint z_;
  int n_leapfrog_ = 0;
  double sum_metro_prob_ = 0.0;
  bool divergent_ = false;
};

void evaluate(const LogDensityFn& f, PhasePoint& z) {
  z.log_density = f(z.q, z.grad);
  if (std::isnan(z.log_density)) z.log_density = -kInf;
}

// Doubles or halves the step until a single leapfrog step crosses acceptance 0.5.
double initial_step_size(const LogDensityFn& f, const PhasePoint& start, double step,
                         const Eigen::VectorXd& inv_metric, std::mt19937_64& rng) {
  if (!(step > 0.0) || step > 1e7) return step;
  const double log_target = std::log(0.5);
  auto trial = [&]() {
    PhasePoint z = start;
    sample_momentum(z, inv_metric, rng);
    double h0 = hamiltonian(z, inv_metric);
    leapfrog(f, z, step, inv_metric);
    double h = hamiltonian(z, inv_metric);
    if (std::isnan(h)) h = kInf;
    return h0 - h;
  };
  const int direction = trial() > log_target ? 1 : -1;
  for (int guard = 0; guard < 200; ++guard) {
    double delta_h = trial();
    if (direction == 1 && !(delta_h > log_target)) break;
    if (direction == -1 && !(delta_h < log_target)) break;
    step = direction == 1 ? 2.0 * step : 0.5 * step;
    if (step > 1e7) {
      throw Error(ErrorCode::InitFailure, "step size diverged to infinity during initialization");
    }
    if (step == 0.0) {
      throw Error(ErrorCode::InitFailure, "step size collapsed to zero during initialization");
    }
  }
  return step;
}

class Welford {
 public:
  explicit Welford(int dim) : m_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}
  void add(const Eigen::VectorXd& q) {
    ++n_;
    Eigen::VectorXd delta = q - m_;
    m_ += delta / n_;
    m2_ += delta.cwiseProduct(q - m_);
  }
  int count() const { return n_; }
  Eigen::VectorXd variance() const { return n_ > 1 ? Eigen::VectorXd(m2_ / (n_ - 1.0)) : m2_; }
  void restart() {
    n_ = 0;
    m_.setZero();
    m2_.setZero();
  }

 private:
  int n_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd m2_;
};

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw Error(ErrorCode::InvalidConfig, "chains must be >= 1");
  if (warmup < 0 || iterations <= warmup) {
    throw Error(ErrorCode::InvalidConfig, "iterations must exceed warmup and warmup must be >= 0");
  }
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "target_accept must lie in (0, 1)");
  }
  if (max_tree_depth < 0) throw Error(ErrorCode::InvalidConfig, "max_tree_depth must be >= 0");
  if (!(init_radius >= 0.0)) throw Error(ErrorCode::InvalidConfig, "init_radius must be >= 0");
  if (!(init_step_size > 0.0)) throw Error(ErrorCode::InvalidConfig, "init_step_size must be > 0");
  if (threads < 0) throw Error(ErrorCode::InvalidConfig, "threads must be >= 0");
}

SamplerConfig sampler_config_from_json(const nlohmann::json& j) {
  static const char* known[] = {"chains", "iterations", "warmup", "target_accept",
                                "max_tree_depth", "seed", "init_radius", "init_step_size",
                                "threads"};
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known)) {
      throw Error(ErrorCode::InvalidConfig, "unknown sampler option: " + key);
    }
  }
  SamplerConfig c;
  try {
    c.chains = j.value("chains", c.chains);
    c.iterations = j.value("iterations", c.iterations);
    c.warmup = j.value("warmup", c.warmup);
    c.target_accept = j.value("target_accept", c.target_accept);
    c.max_tree_depth = j.value("max_tree_depth", c.max_tree_depth);
    c.seed = j.value("seed", c.seed);
    c.init_radius = j.value("init_radius", c.init_radius);
    c.init_step_size = j.value("init_step_size", c.init_step_size);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("sampler config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json sampler_config_to_json(const SamplerConfig& c) {
  return {{"chains", c.chains},
          {"iterations", c.iterations},
          {"warmup", c.warmup},
          {"target_accept", c.target_accept},
          {"max_tree_depth", c.max_tree_depth},
          {"seed", c.seed},
          {"init_radius", c.init_radius},
          {"init_step_size", c.init_step_size},
          {"threads", c.threads}};
}

void leapfrog(const LogDensityFn& f, PhasePoint& z, double step_size,
              const Eigen::VectorXd& inv_metric) {
  z.p += 0.5 * step_size * z.grad;
  z.q += step_size * inv_metric.cwiseProduct(z.p);
  evaluate(f, z);
  z.p += 0.5 * step_size * z.grad;
}

TransitionStats nuts_transition(const LogDensityFn& f, PhasePoint& z, double step_size,
                                const Eigen::VectorXd& inv_metric, int max_depth,
                                std::mt19937_64& rng) {
  Nuts nuts(f, step_size, inv_metric, max_depth, rng);
  return nuts.transition(z);
}

StepSizeAdapter::StepSizeAdapter(double target, double initial_step)
    : target_(target), mu_(std::log(10.0 * initial_step)) {}

void StepSizeAdapter::restart(double step) {
  mu_ = std::log(10.0 * step);
  counter_ = 0.0;
  s_bar_ = 0.0;
  x_bar_ = 0.0;
}

double StepSizeAdapter::learn(double accept_stat) {
  constexpr double kGamma = 0.05;
  constexpr double kT0 = 10.0;
  constexpr double kKappa = 0.75;
  counter_ += 1.0;
  accept_stat = std::min(1.0, accept_stat);
  double eta = 1.0 / (counter_ + kT0);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - accept_stat);
  double x = mu_ - s_bar_ * std::sqrt(counter_) / kGamma;
  double x_eta = std::pow(counter_, -kKappa);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

double StepSizeAdapter::final_step() const { return std::exp(x_bar_); }

WarmupSchedule::WarmupSchedule(int warmup) : warmup_(warmup) {
  if (warmup < 20) return;
  adapt_metric_ = true;
  init_buffer_ = 75;
  term_buffer_ = 50;
  base_window_ = 25;
  if (init_buffer_ + base_window_ + term_buffer_ > warmup) {
    init_buffer_ = static_cast<int>(0.15 * warmup);
    term_buffer_ = static_cast<int>(0.1 * warmup);
    base_window_ = warmup - (init_buffer_ + term_buffer_);
  }
}

bool WarmupSchedule::in_slow_window(int iteration) const {
  return adapt_metric_ && iteration >= init_buffer_ && iteration < warmup_ - term_buffer_ &&
         iteration != warmup_;
}

std::vector<int> WarmupSchedule::window_ends() const {
  std::vector<int> ends;
  if (!adapt_metric_) return ends;
  const int last = warmup_ - term_buffer_ - 1;
  int size = base_window_;
  int next = init_buffer_ + size - 1;
  for (int counter = 0; counter < warmup_; ++counter) {
    if (counter != next) continue;
    ends.push_back(counter);
    if (next == last) break;
    size *= 2;
    next = counter + size;
    if (next != last && next + 2 * size >= warmup_ - term_buffer_) next = last;
  }
  return ends;
}

bool WarmupSchedule::is_window_end(int iteration) const {
  auto ends = window_ends();
  return std::find(ends.begin(), ends.end(), iteration) != ends.end();
}

int SamplerRun::divergent_count() const {
  int count = 0;
  for (const auto& c : chains) {
    for (const auto& s : c.stats) count += s.divergent ? 1 : 0;
  }
  return count;
}

double SamplerRun::divergent_fraction() const {
  std::size_t total = 0;
  for (const auto& c : chains) total += c.stats.size();
  return total ? static_cast<double>(divergent_count()) / static_cast<double>(total) : 0.0;
}

double SamplerRun::max_treedepth_fraction() const {
  std::size_t total = 0;
  std::size_t hit = 0;
  for (const auto& c : chains) {
    for (const auto& s : c.stats) {
      ++total;
      hit += s.tree_depth >= config.max_tree_depth ? 1 : 0;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

std::mt19937_64 chain_rng(std::uint64_t seed, int chain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(chain),
                    0x5eedu};
  return std::mt19937_64(seq);
}

ChainResult run_chain(const LogDensityFn& f, int dim, const SamplerConfig& config, int chain_id,
                      const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& pointwise) {
  config.validate();
  using Clock = std::chrono::steady_clock;
  std::mt19937_64 rng = chain_rng(config.seed, chain_id);
  std::uniform_real_distribution<double> init_dist(-config.init_radius, config.init_radius);

  PhasePoint z;
  z.q.resize(dim);
  z.p.resize(dim);
  z.grad.resize(dim);
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    for (int i = 0; i < dim; ++i) z.q[i] = init_dist(rng);
    evaluate(f, z);
    ok = std::isfinite(z.log_density) && z.grad.allFinite();
  }
  if (!ok) {
    throw Error(ErrorCode::InitFailure,
                "no finite initial point after 100 attempts in chain " + std::to_string(chain_id));
  }

  ChainResult out;
  out.initial_point = z.q;
  Eigen::VectorXd inv_metric = Eigen::VectorXd::Ones(dim);
  double step = config.init_step_size;
  const int warmup = config.warmup;
  const int draws = config.num_draws();

  auto start = Clock::now();
  if (warmup > 0) {
    step = initial_step_size(f, z, step, inv_metric, rng);
    StepSizeAdapter adapter(config.target_accept, step);
    WarmupSchedule schedule(warmup);
    auto ends = schedule.window_ends();
    Welford estimator(dim);
    for (int it = 0; it < warmup; ++it) {
      TransitionStats s = nuts_transition(f, z, step, inv_metric, config.max_tree_depth, rng);
      out.warmup_divergences += s.divergent ? 1 : 0;
      step = adapter.learn(s.accept_stat);
      if (schedule.in_slow_window(it)) estimator.add(z.q);
      if (std::find(ends.begin(), ends.end(), it) != ends.end()) {
        double n = estimator.count();
        inv_metric = (n / (n + 5.0)) * estimator.variance().array() + 1e-3 * (5.0 / (n + 5.0));
        estimator.restart();
        step = initial_step_size(f, z, step, inv_metric, rng);
        adapter.restart(step);
      }
    }
    step = adapter.final_step();
    if (out.warmup_divergences == warmup) {
      throw Error(ErrorCode::AllDivergent,
                  "every warmup transition diverged in chain " + std::to_string(chain_id));
    }
  }
  auto mid = Clock::now();

  out.draws.resize(draws, dim);
  if (pointwise) out.pointwise_loglik.resize(draws, 0);
  out.stats.reserve(draws);
  for (int it = 0; it < draws; ++it) {
    out.stats.push_back(nuts_transition(f, z, step, inv_metric, config.max_tree_depth, rng));
    out.draws.row(it) = z.q.transpose();
    if (pointwise) {
      Eigen::VectorXd pw = pointwise(z.q);
      if (it == 0) out.pointwise_loglik.resize(draws, pw.size());
      out.pointwise_loglik.row(it) = pw.transpose();
    }
  }
  auto end = Clock::now();
  out.step_size = step;
  out.inv_metric = inv_metric;
  out.warmup_seconds = std::chrono::duration<double>(mid - start).count();
  out.sampling_seconds = std::chrono::duration<double>(end - mid).count();
  return out;
}

SamplerRun sample_posterior(const PosteriorDensity& target, const SamplerConfig& config,
                            bool keep_pointwise) {
  config.validate();
  SamplerRun run;
  run.config = config;
  run.chains.resize(config.chains);
  LogDensityFn f = [&target](const Eigen::VectorXd& u, Eigen::VectorXd& g) { return target(u, g); };
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> pw;
  if (keep_pointwise) pw = [&target](const Eigen::VectorXd& u) { return target.pointwise(u); };

  int threads = config.threads > 0 ? config.threads
                                   : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, config.chains);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (int c = next++; c < config.chains; c = next++) {
      try {
        run.chains[c] = run_chain(f, target.dim(), config, c, pw);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return run;
}

}  // namespace peergrade

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "peergrade/models.hpp"

namespace peergrade {

struct SamplerConfig {
  int chains = 4;
  int iterations = 2000;  // total per chain, warmup included
  int warmup = 1000;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 20240601;
  double init_radius = 2.0;
  double init_step_size = 1.0;
  int threads = 0;  // 0: hardware concurrency

  int num_draws() const { return iterations - warmup; }
  void validate() const;
};

SamplerConfig sampler_config_from_json(const nlohmann::json& j);
nlohmann::json sampler_config_to_json(const SamplerConfig& c);

struct TransitionStats {
  double accept_stat = 0.0;
  int tree_depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double energy = 0.0;
  double log_density = 0.0;
};

/// Target density on R^d returning log p and filling its gradient.
using LogDensityFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// One Hamiltonian state.
struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double log_density = 0.0;
};

/// Leapfrog step with a diagonal inverse metric.
void leapfrog(const LogDensityFn& f, PhasePoint& z, double step_size,
              const Eigen::VectorXd& inv_metric);

/// No-U-turn transition (multinomial sampling, generalized U-turn criterion).
TransitionStats nuts_transition(const LogDensityFn& f, PhasePoint& z, double step_size,
                                const Eigen::VectorXd& inv_metric, int max_depth,
                                std::mt19937_64& rng);

/// Step-size dual averaging.
class StepSizeAdapter {
 public:
  StepSizeAdapter(double target, double initial_step);
  void restart(double step);
  double learn(double accept_stat);  // returns the next step size
  double final_step() const;

 private:
  double target_;
  double mu_;
  double counter_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

/// Windowed warmup schedule: fast initial buffer, doubling slow windows, fast terminal buffer.
class WarmupSchedule {
 public:
  explicit WarmupSchedule(int warmup);
  bool adapt_metric() const { return adapt_metric_; }
  bool in_slow_window(int iteration) const;
  bool is_window_end(int iteration) const;
  int init_buffer() const { return init_buffer_; }
  int term_buffer() const { return term_buffer_; }
  std::vector<int> window_ends() const;

 private:
  int warmup_;
  bool adapt_metric_ = false;
  int init_buffer_ = 0;
  int term_buffer_ = 0;
  int base_window_ = 0;
};

/// Draws of one run, on the unconstrained scale.
struct ChainResult {
  Eigen::MatrixXd draws;              // num_draws x dim
  Eigen::MatrixXd pointwise_loglik;   // num_draws x num_observations (empty when not requested)
  std::vector<TransitionStats> stats;  // post-warmup
  int warmup_divergences = 0;
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
  Eigen::VectorXd initial_point;
  double warmup_seconds = 0.0;
  double sampling_seconds = 0.0;
};

struct SamplerRun {
  SamplerConfig config;
  std::vector<ChainResult> chains;

  int num_chains() const { return static_cast<int>(chains.size()); }
  int num_draws() const { return chains.empty() ? 0 : static_cast<int>(chains[0].draws.rows()); }
  int dim() const { return chains.empty() ? 0 : static_cast<int>(chains[0].draws.cols()); }
  int divergent_count() const;
  double divergent_fraction() const;
  double max_treedepth_fraction() const;
};

/// Runs one chain of adaptive NUTS on an arbitrary target.
ChainResult run_chain(const LogDensityFn& f, int dim, const SamplerConfig& config, int chain_id,
                      const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& pointwise = {});

/// Runs `config.chains` independent chains of the posterior; chain c uses an RNG stream derived
/// from (seed, c), so results do not depend on the thread count.
SamplerRun sample_posterior(const PosteriorDensity& target, const SamplerConfig& config,
                            bool keep_pointwise = true);

/// Per-chain generator seeded from (seed, chain).
std::mt19937_64 chain_rng(std::uint64_t seed, int chain);

}  // namespace peergrade

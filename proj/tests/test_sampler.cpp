#include <cmath>
#include <random>

#include "doctest.h"
#include "gaussian_targets.hpp"
#include "peergrade/diagnostics.hpp"
#include "peergrade/error.hpp"
#include "peergrade/sampler.hpp"
#include "support.hpp"

using namespace peergrade;

namespace {

PhasePoint start_at(const LogDensityFn& f, Eigen::VectorXd q, Eigen::VectorXd p) {
  PhasePoint z;
  z.q = std::move(q);
  z.p = std::move(p);
  z.log_density = f(z.q, z.grad);
  return z;
}

double energy(const PhasePoint& z, const Eigen::VectorXd& inv_metric) {
  return -z.log_density + 0.5 * z.p.dot(inv_metric.cwiseProduct(z.p));
}

// Non-Gaussian target so the leapfrog map is nonlinear.
double banana(const Eigen::VectorXd& q, Eigen::VectorXd& grad) {
  double a = q[1] - q[0] * q[0];
  grad.resize(2);
  grad[0] = -q[0] + 2.0 * q[0] * a;
  grad[1] = -a;
  return -0.5 * q[0] * q[0] - 0.5 * a * a;
}

SamplerConfig quick_config(std::uint64_t seed = 1) {
  SamplerConfig c;
  c.chains = 4;
  c.iterations = 2000;
  c.warmup = 1000;
  c.seed = seed;
  c.threads = 1;
  return c;
}

}  // namespace

TEST_CASE("leapfrog on a harmonic oscillator conserves energy") {
  auto f = testing::standard_gaussian(1);
  Eigen::VectorXd unit = Eigen::VectorXd::Ones(1);
  auto z = start_at(f, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  double h0 = energy(z, unit);
  leapfrog(f, z, 0.1, unit);
  CHECK(std::abs(energy(z, unit) - h0) < 1e-3);
}

TEST_CASE("leapfrog is reversible") {
  LogDensityFn f = banana;
  Eigen::VectorXd inv_metric(2);
  inv_metric << 0.7, 1.3;
  auto z = start_at(f, Eigen::Vector2d(0.3, -0.2), Eigen::Vector2d(0.9, 0.4));
  PhasePoint start = z;
  for (int k = 0; k < 5; ++k) leapfrog(f, z, 0.05, inv_metric);
  z.p = -z.p;
  for (int k = 0; k < 5; ++k) leapfrog(f, z, 0.05, inv_metric);
  CHECK((z.q - start.q).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((z.p + start.p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("leapfrog preserves phase-space volume") {
  LogDensityFn f = banana;
  Eigen::VectorXd inv_metric = Eigen::Vector2d(0.7, 1.3);
  auto step = [&](const Eigen::VectorXd& state) {
    auto z = start_at(f, state.head(2), state.tail(2));
    leapfrog(f, z, 0.1, inv_metric);
    Eigen::VectorXd out(4);
    out << z.q, z.p;
    return out;
  };
  Eigen::VectorXd x(4);
  x << 0.3, -0.2, 0.9, 0.4;
  Eigen::MatrixXd jac(4, 4);
  const double h = 1e-6;
  for (int j = 0; j < 4; ++j) {
    Eigen::VectorXd up = x, down = x;
    up[j] += h;
    down[j] -= h;
    jac.col(j) = (step(up) - step(down)) / (2.0 * h);
  }
  CHECK(std::abs(jac.determinant() - 1.0) < 1e-6);
}

TEST_CASE("leapfrog with zero gradient is a pure drift") {
  LogDensityFn flat = [](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Zero(q.size());
    return 0.0;
  };
  Eigen::VectorXd inv_metric = Eigen::Vector3d(1.0, 2.0, 0.5);
  auto z = start_at(flat, Eigen::Vector3d(1.0, 2.0, 3.0), Eigen::Vector3d(0.5, -1.0, 2.0));
  leapfrog(flat, z, 0.25, inv_metric);
  Eigen::VectorXd expected = Eigen::Vector3d(1.0, 2.0, 3.0) +
                             0.25 * inv_metric.cwiseProduct(Eigen::Vector3d(0.5, -1.0, 2.0));
  CHECK((z.q - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("depth-zero trees take exactly one leapfrog step") {
  auto f = testing::standard_gaussian(1);
  std::mt19937_64 rng(3);
  Eigen::VectorXd unit = Eigen::VectorXd::Ones(1);
  PhasePoint z = start_at(f, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1));
  double sum = 0.0, sum_sq = 0.0;
  const int n = 40000;
  for (int it = 0; it < n; ++it) {
    auto s = nuts_transition(f, z, 0.9, unit, 0, rng);
    REQUIRE(s.n_leapfrog == 1);
    sum += z.q[0];
    sum_sq += z.q[0] * z.q[0];
  }
  // One-step HMC still leaves N(0, 1) invariant.
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sum_sq / n - 1.0) < 0.08);
}

TEST_CASE("NUTS recovers standard normal moments") {
  auto config = quick_config(42);
  auto draws = testing::run_chains(testing::standard_gaussian(2), 2, config);
  for (const auto& d : draws) {
    const double n = static_cast<double>(d.size());
    double mean = d.mean();
    double sd = std::sqrt((d.array() - mean).square().sum() / (n - 1.0));
    double ess = ess_basic(d).value;
    CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(ess));
    // se(sd) from the delta method on E[x^2].
    Eigen::MatrixXd sq = d.array().square();
    double sq_sd = std::sqrt((sq.array() - sq.mean()).square().sum() / (n - 1.0));
    double mcse_sd = sq_sd / std::sqrt(ess_basic(sq).value) / (2.0 * sd);
    CHECK(std::abs(sd - 1.0) < 3.0 * mcse_sd);
  }
}

TEST_CASE("NUTS recovers a strong correlation") {
  auto config = quick_config(7);
  auto draws = testing::run_chains(testing::correlated_gaussian(0.9), 2, config);
  Eigen::VectorXd x = draws[0].reshaped();
  Eigen::VectorXd y = draws[1].reshaped();
  double mx = x.mean(), my = y.mean();
  double cov = (x.array() - mx).cwiseProduct(y.array() - my).sum();
  double corr = cov / std::sqrt((x.array() - mx).square().sum() * (y.array() - my).square().sum());
  CHECK(std::abs(corr - 0.9) < 0.05);
}

TEST_CASE("adaptation") {
  SUBCASE("metric tracks very different scales") {
    auto config = quick_config(5);
    config.chains = 1;
    auto chain = run_chain(testing::diagonal_gaussian(Eigen::Vector2d(1.0, 100.0)), 2, config, 0);
    double ratio = chain.inv_metric[1] / chain.inv_metric[0];
    CHECK(ratio > 50.0);
    CHECK(ratio < 200.0);
  }
  SUBCASE("dual averaging reaches the target acceptance") {
    auto config = quick_config(9);
    double accept = 0.0;
    testing::run_chains(testing::standard_gaussian(10), 10, config, nullptr, &accept);
    CHECK(accept > 0.7);
    CHECK(accept < 0.9);
  }
  SUBCASE("no warmup leaves the initial settings unchanged") {
    auto config = quick_config(2);
    config.warmup = 0;
    config.iterations = 50;
    config.init_step_size = 0.37;
    auto chain = run_chain(testing::standard_gaussian(3), 3, config, 0);
    CHECK(chain.step_size == 0.37);
    CHECK(chain.inv_metric.isApproxToConstant(1.0));
    CHECK(chain.draws.rows() == 50);
  }
  SUBCASE("step-size adapter converges toward a fixed acceptance response") {
    // Synthetic response: acceptance = exp(-step); the fixed point for 0.8 is -log(0.8).
    StepSizeAdapter adapter(0.8, 1.0);
    double step = 1.0;
    for (int it = 0; it < 2000; ++it) step = adapter.learn(std::exp(-step));
    CHECK(adapter.final_step() == doctest::Approx(-std::log(0.8)).epsilon(0.05));
  }
  SUBCASE("warmup schedule windows") {
    WarmupSchedule schedule(1000);
    CHECK(schedule.adapt_metric());
    CHECK(schedule.init_buffer() == 75);
    CHECK(schedule.term_buffer() == 50);
    CHECK(schedule.window_ends() == std::vector<int>{99, 149, 249, 449, 949});
    CHECK(schedule.in_slow_window(75));
    CHECK_FALSE(schedule.in_slow_window(74));
    CHECK_FALSE(schedule.in_slow_window(950));
    WarmupSchedule small(100);
    CHECK(small.init_buffer() == 15);
    CHECK(small.term_buffer() == 10);
    CHECK(small.window_ends() == std::vector<int>{89});
  }
}

TEST_CASE("chains are reproducible and seed dependent") {
  auto config = quick_config(123);
  config.iterations = 300;
  config.warmup = 150;
  auto f = testing::correlated_gaussian(0.5);
  auto a = run_chain(f, 2, config, 1);
  auto b = run_chain(f, 2, config, 1);
  CHECK(a.draws == b.draws);
  config.seed = 124;
  auto c = run_chain(f, 2, config, 1);
  CHECK(c.draws.row(0) != a.draws.row(0));
  auto other_chain = run_chain(f, 2, quick_config(123), 2);
  CHECK(other_chain.initial_point != a.initial_point);
}

TEST_CASE("posterior sampling does not depend on the thread count") {
  auto sim = testing::small_dataset(Variant::M2s, 8, 2, 4);
  auto layout = testing::layout_of(Variant::M2s, sim.data);
  PosteriorDensity target(layout, sim.data);
  SamplerConfig config = quick_config(77);
  config.iterations = 200;
  config.warmup = 100;
  config.threads = 1;
  auto serial = sample_posterior(target, config);
  config.threads = 4;
  auto parallel = sample_posterior(target, config);
  REQUIRE(serial.num_chains() == 4);
  for (int c = 0; c < 4; ++c) {
    CHECK(serial.chains[c].draws == parallel.chains[c].draws);
    CHECK(serial.chains[c].pointwise_loglik == parallel.chains[c].pointwise_loglik);
    CHECK(serial.chains[c].pointwise_loglik.rows() == serial.chains[c].draws.rows());
    CHECK(serial.chains[c].pointwise_loglik.cols() == sim.data.size());
    CHECK(serial.chains[c].draws.allFinite());
  }
}

TEST_CASE("failure modes") {
  SUBCASE("no finite initial point") {
    LogDensityFn impossible = [](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
      g = Eigen::VectorXd::Zero(q.size());
      return -std::numeric_limits<double>::infinity();
    };
    try {
      run_chain(impossible, 2, quick_config(), 0);
      FAIL("expected InitFailure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InitFailure);
    }
  }
  SUBCASE("every warmup transition diverges") {
    // Finite only for the first few evaluations (initialization), then -inf everywhere.
    int calls = 0;
    LogDensityFn collapsing = [&calls](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
      g = -q;
      return ++calls <= 3 ? -0.5 * q.squaredNorm() : -std::numeric_limits<double>::infinity();
    };
    auto config = quick_config();
    config.warmup = 30;
    config.iterations = 40;
    try {
      run_chain(collapsing, 2, config, 0);
      FAIL("expected AllDivergent");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::AllDivergent);
    }
  }
  SUBCASE("invalid configurations") {
    SamplerConfig c;
    c.warmup = c.iterations;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK_THROWS_AS(sampler_config_from_json({{"chains", 0}}), Error);
    CHECK_THROWS_AS(sampler_config_from_json({{"adapt_delta", 0.9}}), Error);
    auto round = sampler_config_from_json(sampler_config_to_json(quick_config(99)));
    CHECK(round.seed == 99);
    CHECK(round.threads == 1);
  }
}

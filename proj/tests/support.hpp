#pragma once

#include <random>

#include <Eigen/Dense>

#include "peergrade/models.hpp"
#include "peergrade/parameter_space.hpp"
#include "peergrade/simulation.hpp"

namespace testing {

using namespace peergrade;

inline int assessments_for(Variant v) {
  const auto& t = traits(v);
  if (t.single_assessment) return 1;
  return std::max(3, t.min_assessments);
}

inline SimulatedData small_dataset(Variant v, int n = 6, int m = 2, std::uint64_t seed = 7) {
  GeneratorConfig g = default_generator(v, n, assessments_for(v), m);
  g.sigma *= 0.5;
  g.seed = seed;
  if (traits(v).ordinal) g.categories = 4;
  if (traits(v).piech) g.piech = {0.0, 2.0, 0.1, 1.0, 2.0};
  return generate(g);
}

inline ParameterLayout layout_of(Variant v, const PeerGradingDataset& d) {
  ModelSpec spec;
  spec.variant = v;
  const int k = d.scale().is_ordinal() ? d.scale().categories : 0;
  return layout_for(spec, d.num_students(), d.num_assessments(), k);
}

inline Eigen::VectorXd random_point(int dim, std::mt19937_64& rng, double sd = 0.7) {
  std::normal_distribution<double> normal(0.0, sd);
  Eigen::VectorXd u(dim);
  for (int i = 0; i < dim; ++i) u[i] = normal(rng);
  return u;
}

/// |a - b| relative to the larger magnitude, with unit floor so near-zero entries are compared
/// absolutely.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace testing

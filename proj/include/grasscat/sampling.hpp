#pragma once

// Exact sampling by a cumulative scan over the enumerated allowed states.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdint>
#include <random>
#include <vector>

#include "grasscat/errors.hpp"
#include "grasscat/factor.hpp"
#include "grasscat/grassmann.hpp"
#include "grasscat/mixed.hpp"
#include "grasscat/schema.hpp"

namespace grasscat {

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

class DiscreteSampler {
 public:
  DiscreteSampler(std::vector<StateMask> states, const std::vector<double>& probs) : states_(std::move(states)) {
    double acc = 0.0;
    for (double p : probs) {
      if (p < -1e-12) throw PositivityError("cannot sample: a state has negative probability " + std::to_string(p));
      acc += std::max(p, 0.0);
      cdf_.push_back(acc);
    }
    if (!(acc > 0.0)) throw DegenerateError("cannot sample: total probability is zero");
    for (double& c : cdf_) c /= acc;
  }

  StateMask draw(std::mt19937_64& rng) const { return states_[index_of_draw(rng)]; }

  std::size_t index_of_draw(std::mt19937_64& rng) const {
    const double u = unit_uniform(rng);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), states_.size() - 1);
  }

  const std::vector<StateMask>& states() const { return states_; }

 private:
  std::vector<StateMask> states_;
  std::vector<double> cdf_;
};

inline DiscreteSampler grassmann_sampler(const GrassmannParams& p, const VariableSchema& schema) {
  if (p.q() != schema.q()) throw SchemaError("model dimension does not match the schema");
  auto states = enumerate_allowed_masks(schema, EnumerationCaps::from_env().allowed_states);
  std::vector<double> probs;
  probs.reserve(states.size());
  for (StateMask m : states) probs.push_back(joint_probability(p, m));
  return DiscreteSampler(std::move(states), probs);
}

/// n exact draws as records.
inline std::vector<Record> sample_records(const GrassmannParams& p, const VariableSchema& schema, std::size_t n,
                                          std::uint64_t seed) {
  const auto sampler = grassmann_sampler(p, schema);
  std::mt19937_64 rng(seed);
  std::vector<Record> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(decode_state(schema, DummyState::from_mask(sampler.draw(rng), schema.q())));
  return out;
}

/// Box-Muller on unit_uniform, so draws do not depend on the standard library.
inline double standard_normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - unit_uniform(rng);
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

struct MixedSample {
  std::vector<Record> rows;
  Matrix x;
};

inline Vector normal_draw(std::mt19937_64& rng, const Vector& mean, const Matrix& chol_l) {
  Vector e(mean.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = standard_normal(rng);
  return mean + chol_l * e;
}

/// y from the prior mixture weights, then x from its component normal.
inline MixedSample sample_factor(const FactorModel& m, const VariableSchema& schema, std::size_t n, std::uint64_t seed) {
  m.validate(schema);
  const auto mw = mixture_weights(schema, m);
  const DiscreteSampler sampler(mw.states, mw.weights);
  const Matrix l = m.p_x() > 0 ? Matrix(marginal_x_covariance(m).llt().matrixL()) : Matrix(0, 0);
  const Matrix shift = m.w_load * m.sigma_z * m.g.transpose();
  std::mt19937_64 rng(seed);
  MixedSample out;
  out.x.resize(static_cast<Eigen::Index>(n), m.p_x());
  for (std::size_t i = 0; i < n; ++i) {
    const StateMask y = sampler.draw(rng);
    out.rows.push_back(decode_state(schema, DummyState::from_mask(y, schema.q())));
    if (m.p_x() > 0) out.x.row(static_cast<Eigen::Index>(i)) = normal_draw(rng, m.mu_x + shift * state_vector(y, schema.q()), l).transpose();
  }
  return out;
}

inline MixedSample sample_mixed(const MixedParams& mp, const VariableSchema& schema, std::size_t n, std::uint64_t seed) {
  if (!schema.binary_only() || schema.q() != mp.q()) throw SchemaError("mixed sampling needs one binary variable per dummy");
  const auto w = mixed_weights(mp);
  std::vector<StateMask> states(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) states[i] = static_cast<StateMask>(i);
  const DiscreteSampler sampler(std::move(states), w);
  const Matrix l = mp.p() > 0 ? Matrix(mp.sigma.llt().matrixL()) : Matrix(0, 0);
  const Matrix shift = mp.sigma * mp.g_int.transpose();
  std::mt19937_64 rng(seed);
  MixedSample out;
  out.x.resize(static_cast<Eigen::Index>(n), mp.p());
  for (std::size_t i = 0; i < n; ++i) {
    const StateMask y = sampler.draw(rng);
    out.rows.push_back(decode_state(schema, DummyState::from_mask(y, schema.q())));
    if (mp.p() > 0) out.x.row(static_cast<Eigen::Index>(i)) = normal_draw(rng, mp.mu + shift * detail::ones_of(y, mp.q()), l).transpose();
  }
  return out;
}

}  // namespace grasscat

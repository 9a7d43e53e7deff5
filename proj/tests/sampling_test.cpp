#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "grasscat/factor.hpp"
#include "grasscat/sampling.hpp"
#include "test_support.hpp"

using namespace grasscat;
namespace tk = grasscat::testkit;

namespace {

// every state's count within 4 multinomial standard deviations
void expect_within_4_sigma(const std::map<StateMask, std::size_t>& counts, const std::vector<StateMask>& states,
                           const std::vector<double>& probs, std::size_t n) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto it = counts.find(states[i]);
    const double c = it == counts.end() ? 0.0 : static_cast<double>(it->second);
    seen += static_cast<std::size_t>(c);
    const double nn = static_cast<double>(n);
    const double sd = std::sqrt(nn * probs[i] * (1.0 - probs[i]));
    EXPECT_LE(std::abs(c - nn * probs[i]), 4.0 * sd + 1e-9) << "state " << states[i];
  }
  EXPECT_EQ(seen, n);  // nothing outside the allowed set
}

}  // namespace

TEST(Sampling, FrequenciesMatchReaderModel) {
  const auto s = tk::reader_schema();
  const auto p = tk::reader_params();
  const std::size_t n = 100000;
  std::map<StateMask, std::size_t> counts;
  for (const auto& r : sample_records(p, s, n, 8)) ++counts[encode_record(s, r).mask()];
  const auto states = enumerate_allowed_masks(s);
  std::vector<double> probs;
  for (auto m : states) probs.push_back(joint_probability(p, m));
  expect_within_4_sigma(counts, states, probs, n);
}

TEST(Sampling, SameSeedSameDraws) {
  const auto s = tk::reader_schema();
  EXPECT_EQ(sample_records(tk::reader_params(), s, 500, 3), sample_records(tk::reader_params(), s, 500, 3));
  EXPECT_NE(sample_records(tk::reader_params(), s, 500, 3), sample_records(tk::reader_params(), s, 500, 4));
}

TEST(Sampling, NegativeProbabilityRefused) {
  const auto s = tk::schema_of({{VariableKind::Categorical, 2}, {VariableKind::Categorical, 2}});
  Matrix lam(2, 2);
  lam << 1.5, 2.0, 2.0, 1.5;
  EXPECT_THROW(sample_records(GrassmannParams::from_lambda(lam), s, 10, 1), PositivityError);
}

TEST(Sampling, StandardNormalMoments) {
  std::mt19937_64 rng(11);
  const int n = 200000;
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(rng);
    m1 += z;
    m2 += z * z;
  }
  m1 /= n;
  m2 /= n;
  EXPECT_LE(std::abs(m1), 4.0 / std::sqrt(n));
  EXPECT_LE(std::abs(m2 - 1.0), 4.0 * std::sqrt(2.0 / n));
}

TEST(Sampling, FactorModelDiscreteAndContinuous) {
  tk::Rng rng(5);
  const auto s = tk::reader_schema();
  FactorModel m;
  m.b = tk::gaussian_vector(rng, 6, 0.5);
  m.g = tk::gaussian_matrix(rng, 6, 2, 0.6);
  m.mu_x = tk::gaussian_vector(rng, 2);
  m.psi = Vector::Constant(2, 0.7);
  m.w_load = tk::gaussian_matrix(rng, 2, 2, 0.8);
  m.mu_z = Vector::Zero(2);
  m.sigma_z = Matrix::Identity(2, 2);
  const std::size_t n = 100000;
  const auto smp = sample_factor(m, s, n, 9);
  std::map<StateMask, std::size_t> counts;
  for (const auto& r : smp.rows) ++counts[encode_record(s, r).mask()];
  const auto mw = mixture_weights(s, m);
  expect_within_4_sigma(counts, mw.states, mw.weights, n);

  // x mean: mu_x + W Sigma_z G^T E[y]
  const Vector ey = factor_mean(m, s);
  const Vector mean = m.mu_x + m.w_load * m.sigma_z * m.g.transpose() * ey;
  const Vector got = smp.x.colwise().mean().transpose();
  const Matrix centred = smp.x.rowwise() - got.transpose();
  const Matrix cov = centred.transpose() * centred / static_cast<double>(n);
  for (int i = 0; i < 2; ++i) EXPECT_LE(std::abs(got(i) - mean(i)), 4.0 * std::sqrt(cov(i, i) / n));
}

TEST(Sampling, MixedModelBinaryFrequencies) {
  tk::Rng rng(6);
  MixedParams mp;
  mp.mu = Vector::Zero(1);
  mp.sigma = Matrix::Identity(1, 1);
  mp.lambda = tk::random_valid_params(rng, 3).lambda();
  mp.g_int = tk::gaussian_matrix(rng, 3, 1, 0.5);
  const auto s = tk::schema_of({{VariableKind::Categorical, 2}, {VariableKind::Categorical, 2},
                                {VariableKind::Categorical, 2}});
  const std::size_t n = 100000;
  const auto smp = sample_mixed(mp, s, n, 12);
  std::map<StateMask, std::size_t> counts;
  for (const auto& r : smp.rows) ++counts[encode_record(s, r).mask()];
  const auto w = mixed_weights(mp);
  std::vector<StateMask> states;
  for (StateMask k = 0; k < 8; ++k) states.push_back(k);
  expect_within_4_sigma(counts, states, w, n);
  EXPECT_THROW(sample_mixed(mp, tk::reader_schema(), 5, 1), SchemaError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "grasscat/biplot.hpp"
#include "grasscat/factor.hpp"
#include "grasscat/oracle.hpp"
#include "grasscat/sampling.hpp"
#include "test_support.hpp"

using namespace grasscat;
namespace tk = grasscat::testkit;

namespace {

FactorModel random_model(tk::Rng& rng, const VariableSchema& s, int pz, int px, bool canonical = true) {
  FactorModel m;
  m.b = tk::gaussian_vector(rng, s.q(), 0.7);
  m.g = tk::gaussian_matrix(rng, s.q(), pz, 0.6);
  m.mu_x = tk::gaussian_vector(rng, px);
  m.psi = Vector(px);
  for (int i = 0; i < px; ++i) m.psi(i) = tk::uniform(rng, 0.4, 1.5);
  m.w_load = tk::gaussian_matrix(rng, px, pz, 0.7);
  if (canonical) {
    m.mu_z = Vector::Zero(pz);
    m.sigma_z = Matrix::Identity(pz, pz);
  } else {
    m.mu_z = tk::gaussian_vector(rng, pz, 0.5);
    const Matrix a = tk::gaussian_matrix(rng, pz, pz, 0.5);
    m.sigma_z = a * a.transpose() + 0.5 * Matrix::Identity(pz, pz);
  }
  return m;
}

// p(z) from the mixture written out directly.
double direct_prior(const FactorModel& m, const VariableSchema& s, const Vector& z) {
  const auto states = enumerate_allowed_masks(s, 1u << 20);
  const Matrix quad = m.g * m.sigma_z * m.g.transpose();
  std::vector<double> raw;
  double total = 0.0;
  for (auto st : states) {
    const Vector y = state_vector(st, s.q());
    raw.push_back(std::exp(y.dot(m.b) + 0.5 * y.dot(quad * y)));
    total += raw.back();
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Vector y = state_vector(states[i], s.q());
    acc += raw[i] / total * oracle::normal_pdf(z, m.mu_z + m.sigma_z * m.g.transpose() * y, m.sigma_z);
  }
  return acc;
}

double direct_conditional(const FactorModel& m, const VariableSchema& s, const Vector& x, StateMask y,
                          const Vector& z) {
  const Vector beta = m.b + m.g * (z - m.mu_z);
  double p = independent_pmf(s, beta, DummyState::from_mask(y, s.q()));
  if (m.p_x() > 0) p *= oracle::normal_pdf(x, m.mu_x + m.w_load * (z - m.mu_z), Matrix(m.psi.asDiagonal()));
  return p;
}

double direct_observed(const FactorModel& m, const VariableSchema& s, const Vector& x, StateMask y) {
  const auto mw = mixture_weights(s, m);
  double d = mw.weight_of(y);
  if (m.p_x() > 0) {
    d *= oracle::normal_pdf(x, m.mu_x + m.w_load * m.sigma_z * m.g.transpose() * state_vector(y, s.q()),
                            marginal_x_covariance(m));
  }
  return d;
}

}  // namespace

TEST(MixtureWeights, ZeroLoadingsFactorize) {
  tk::Rng rng(3);
  const auto s = tk::reader_schema();
  const Vector b = tk::gaussian_vector(rng, s.q());
  const auto mw = mixture_weights(s, b, Matrix::Zero(s.q(), 2), Matrix::Identity(2, 2));
  double sum = 0.0;
  for (std::size_t i = 0; i < mw.states.size(); ++i) {
    EXPECT_NEAR(mw.weights[i], independent_pmf(s, b, DummyState::from_mask(mw.states[i], s.q())), 1e-14);
    sum += mw.weights[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(MixtureWeights, UniformAtZero) {
  const auto s = tk::reader_schema();
  const auto mw = mixture_weights(s, Vector::Zero(6), Matrix::Zero(6, 2), Matrix::Identity(2, 2));
  ASSERT_EQ(mw.states.size(), 24U);
  for (double w : mw.weights) EXPECT_NEAR(w, 1.0 / 24.0, 1e-15);
}

TEST(MixtureWeights, DisallowedStatesCarryNoWeight) {
  const auto s = tk::reader_schema();
  const auto mw = mixture_weights(s, Vector::Zero(6), Matrix::Zero(6, 2), Matrix::Identity(2, 2));
  EXPECT_EQ(mw.weight_of(0b000110), 0.0);  // both Age dummies
  EXPECT_EQ(mw.weight_of(0b010000), 0.0);  // ordinal gap
}

TEST(MixtureWeights, SingleOrdinalMatchesDirectFormula) {
  const auto s = tk::schema_of({{VariableKind::Ordinal, 4}});
  Vector b(3);
  b << 0.3, -0.2, 0.1;
  Matrix g(3, 1);
  g << 0.0, 0.0, 1.2;
  const auto mw = mixture_weights(s, b, g, Matrix::Identity(1, 1));
  std::vector<double> score;
  double z = 0.0;
  for (int level = 0; level < 4; ++level) {
    const Vector y = state_vector(encode_record(s, {level}).mask(), 3);
    score.push_back(y.dot(b) + 0.5 * std::pow(y.dot(g.col(0)), 2));
    z += std::exp(score.back());
  }
  for (int level = 0; level < 4; ++level) {
    EXPECT_NEAR(mw.weight_of(encode_record(s, {level}).mask()), std::exp(score[level]) / z, 1e-14);
  }
  // level 3 picks up the quadratic boost, so it beats level 2 despite b
  EXPECT_GT(mw.weight_of(encode_record(s, {3}).mask()), mw.weight_of(encode_record(s, {2}).mask()));
}

TEST(MixtureWeights, CapRespected) {
  const auto s = tk::schema_of({{VariableKind::Categorical, 2}, {VariableKind::Categorical, 2},
                                {VariableKind::Categorical, 2}});
  setenv("GRASSCAT_CAP", "4", 1);
  EXPECT_THROW(mixture_weights(s, Vector::Zero(3), Matrix::Zero(3, 1), Matrix::Identity(1, 1)), EnumerationError);
  unsetenv("GRASSCAT_CAP");
}

TEST(ObservedDensity, DiscreteOnlyIsTheMixtureWeight) {
  const auto s = tk::reader_schema();
  const auto m = FactorModel::discrete(Vector::Zero(6), Matrix::Zero(6, 2));
  double sum = 0.0;
  for (auto st : enumerate_allowed_masks(s, 100)) {
    const auto d = observed_density(m, s, Vector(0), st);
    EXPECT_FALSE(d.structural_zero);
    EXPECT_NEAR(d.density, 1.0 / 24.0, 1e-15);
    sum += d.density;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  const auto bad = observed_density(m, s, Vector(0), 0b000110);
  EXPECT_TRUE(bad.structural_zero);
  EXPECT_EQ(bad.density, 0.0);
}

TEST(ObservedDensity, RandomModelSumsToOne) {
  tk::Rng rng(8);
  const auto s = tk::reader_schema();
  for (int t = 0; t < 10; ++t) {
    const auto m = random_model(rng, s, 2, 0, t % 2 == 0);
    double sum = 0.0;
    for (auto st : enumerate_allowed_masks(s, 100)) sum += observed_density(m, s, Vector(0), st).density;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(ObservedDensity, MatchesDirectMixture) {
  tk::Rng rng(9);
  const auto s = tk::reader_schema();
  for (int t = 0; t < 10; ++t) {
    const auto m = random_model(rng, s, 2, 3, t % 2 == 0);
    const Vector x = tk::gaussian_vector(rng, 3);
    for (auto st : enumerate_allowed_masks(s, 100)) {
      const double d = observed_density(m, s, x, st).density;
      EXPECT_NEAR(d, direct_observed(m, s, x, st), 1e-12 * std::max(1.0, d));
    }
  }
}

TEST(ObservedDensity, IntegratesTheLatentOut) {
  // sum over mixture components of a Gauss-Hermite expectation of p(x, y | z)
  tk::Rng rng(10);
  const auto s = tk::schema_of({{VariableKind::Categorical, 3}, {VariableKind::Ordinal, 3}});
  for (int pz = 1; pz <= 2; ++pz) {
    for (int t = 0; t < 4; ++t) {
      const auto m = random_model(rng, s, pz, 2, t % 2 == 1);
      const auto mw = mixture_weights(s, m);
      const Vector x = tk::gaussian_vector(rng, 2);
      for (auto y : mw.states) {
        double integral = 0.0;
        for (std::size_t k = 0; k < mw.states.size(); ++k) {
          const Vector mean = m.mu_z + m.sigma_z * m.g.transpose() * state_vector(mw.states[k], s.q());
          integral += mw.weights[k] * oracle::gaussian_expectation(mean, m.sigma_z, 40, [&](const Vector& z) {
                        return direct_conditional(m, s, x, y, z);
                      });
        }
        EXPECT_NEAR(integral, observed_density(m, s, x, y).density, 1e-6);
      }
    }
  }
}

TEST(Posterior, TrivialCases) {
  tk::Rng rng(11);
  const auto s = tk::reader_schema();
  const auto m = random_model(rng, s, 2, 3, false);
  const auto post = posterior(m, m.mu_x, Vector(Vector::Zero(6)));
  EXPECT_LT(max_abs(post.m - m.mu_z), 1e-14);

  const auto d = FactorModel::discrete(tk::gaussian_vector(rng, 6), tk::gaussian_matrix(rng, 6, 2));
  const StateMask y = encode_record(s, {1, 2, 3}).mask();
  const auto pd = posterior(d, Vector(0), y);
  EXPECT_LT(max_abs(pd.m - d.g.transpose() * state_vector(y, 6)), 1e-14);
  EXPECT_LT(max_abs(pd.cov - Matrix::Identity(2, 2)), 0.0 + 1e-15);
}

TEST(Posterior, BayesIdentity) {
  tk::Rng rng(12);
  const auto s = tk::reader_schema();
  for (int t = 0; t < 8; ++t) {
    const int px = t % 2 ? 3 : 0;
    const auto m = random_model(rng, s, 2, px, t % 4 < 2);
    const Vector x = tk::gaussian_vector(rng, px);
    const StateMask y = enumerate_allowed_masks(s, 100)[static_cast<std::size_t>(t * 3 % 24)];
    const auto post = posterior(m, x, y);
    const double pxy = direct_observed(m, s, x, y);
    for (int k = 0; k < 5; ++k) {
      const Vector z = post.m + tk::gaussian_vector(rng, 2, 0.8);
      const double bayes = direct_conditional(m, s, x, y, z) * direct_prior(m, s, z) / pxy;
      const double ratio = bayes / oracle::normal_pdf(z, post.m, post.cov);
      EXPECT_NEAR(ratio, 1.0, 1e-8);
    }
  }
}

TEST(Posterior, SingularSigmaZRejected) {
  auto m = FactorModel::discrete(Vector::Zero(2), Matrix::Zero(2, 2));
  m.sigma_z = Matrix::Zero(2, 2);
  EXPECT_THROW(posterior(m, Vector(0), Vector(Vector::Zero(2))), ParameterError);
}

TEST(CombinedLoadings, BaseIdentitiesRandomG) {
  tk::Rng rng(13);
  const auto s = tk::schema_of({{VariableKind::Categorical, 2}, {VariableKind::Categorical, 4},
                                {VariableKind::Ordinal, 2}, {VariableKind::Ordinal, 5}});
  for (int t = 0; t < 50; ++t) {
    const Matrix g = tk::gaussian_matrix(rng, s.q(), 1 + t % 3, 2.0);
    const auto cl = combined_loadings(s, g);
    ASSERT_EQ(cl.entries.size(), 13U);
    std::size_t at = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const int levels = s.variable(j).levels;
      const Vector g0 = cl.entries[at].g;
      if (s.variable(j).kind == VariableKind::Categorical) {
        Vector sum = Vector::Zero(g.cols());
        for (int l = 1; l < levels; ++l) sum += cl.entries[at + l].g;
        EXPECT_LT(max_abs(g0 + sum), 1e-10);
      } else {
        EXPECT_LT(max_abs(g0 + cl.entries[at + levels - 1].g), 1e-10);
      }
      at += static_cast<std::size_t>(levels);
    }
    EXPECT_LT(max_abs(cl.coefficients * g - [&] {
                Matrix c(13, g.cols());
                for (int i = 0; i < 13; ++i) c.row(i) = cl.entries[i].g.transpose();
                return c;
              }()),
              1e-15);
  }
}

TEST(CombinedLoadings, BinaryCategorical) {
  const auto s = tk::schema_of({{VariableKind::Categorical, 2}});
  Matrix g(1, 2);
  g << 3.0, 0.0;
  const auto cl = combined_loadings(s, g);
  // -(1/2) g + g and -(1/2) g
  EXPECT_NEAR(cl.entries[1].g(0), 1.5, 1e-15);
  EXPECT_NEAR(cl.entries[0].g(0), -1.5, 1e-15);
  EXPECT_EQ(cl.entries[1].g(1), 0.0);
}

TEST(CombinedLoadings, BinaryOrdinal) {
  const auto s = tk::schema_of({{VariableKind::Ordinal, 2}});
  Matrix g(1, 2);
  g << 3.0, -1.0;
  const auto cl = combined_loadings(s, g);
  EXPECT_LT(max_abs(cl.entries[1].g - 0.5 * g.row(0).transpose()), 1e-15);
  EXPECT_LT(max_abs(cl.entries[0].g + 0.5 * g.row(0).transpose()), 1e-15);
}

TEST(CombinedLoadings, ShapeMismatch) {
  EXPECT_THROW(combined_loadings(tk::reader_schema(), Matrix::Zero(5, 2)), SchemaError);
}

TEST(FixRotation, DiagonalizesAndPreservesDensity) {
  tk::Rng rng(14);
  const auto s = tk::reader_schema();
  for (int t = 0; t < 20; ++t) {
    const int pz = 1 + t % 3;
    const int px = t % 2 ? 2 : 0;
    const auto m = random_model(rng, s, pz, px, t % 4 < 2);
    const auto rot = fix_rotation(m);
    const Matrix gtg = rot.model.g.transpose() * rot.model.g;
    for (int i = 0; i < pz; ++i) {
      for (int j = 0; j < pz; ++j) {
        if (i != j) {
          EXPECT_NEAR(gtg(i, j), 0.0, 1e-12);
        }
      }
      if (i > 0) {
        EXPECT_GE(gtg(i - 1, i - 1), gtg(i, i));
      }
      EXPECT_NEAR(rot.ratios(i), gtg(i, i) / gtg.trace(), 1e-12);
    }
    EXPECT_LT(max_abs(rot.rotation.transpose() * rot.rotation - Matrix::Identity(pz, pz)), 1e-13);
    const Vector x = tk::gaussian_vector(rng, px);
    for (auto st : enumerate_allowed_masks(s, 100)) {
      const double before = observed_density(m, s, x, st).density;
      EXPECT_NEAR(observed_density(rot.model, s, x, st).density, before, 1e-10 * std::max(1.0, before));
    }
  }
}

TEST(FixRotation, RatiosFromEigenvalues) {
  auto m = FactorModel::discrete(Vector::Zero(2), Matrix::Zero(2, 2));
  m.g << 1.0, 0.0, 0.0, std::sqrt(3.0);
  const auto rot = fix_rotation(m);
  EXPECT_NEAR(rot.ratios(0), 0.75, 1e-15);
  EXPECT_NEAR(rot.ratios(1), 0.25, 1e-15);
  EXPECT_NEAR(std::abs(rot.rotation(1, 0)), 1.0, 1e-15);  // axes swapped
}

TEST(FixRotation, AlreadyDiagonalIsSignedIdentity) {
  auto m = FactorModel::discrete(Vector::Zero(3), Matrix::Zero(3, 2));
  m.g << 2.0, 0.0, 0.0, -1.0, 0.0, 0.0;
  const auto rot = fix_rotation(m);
  EXPECT_LT(max_abs(rot.rotation.cwiseAbs() - Matrix::Identity(2, 2)), 1e-15);
  EXPECT_GT(rot.rotation(0, 0), 0.0);
  EXPECT_GT(rot.rotation(1, 1), 0.0);
}

TEST(FixRotation, DegenerateEigenvaluesKeepAxisOrder) {
  auto m = FactorModel::discrete(Vector::Zero(2), Matrix::Zero(2, 2));
  const double c = std::cos(0.3), sn = std::sin(0.3);
  m.g << c, -sn, sn, c;  // G^T G = I
  const auto a = fix_rotation(m);
  const auto b = fix_rotation(m);
  EXPECT_LT(max_abs(a.rotation - Matrix::Identity(2, 2)), 1e-12);
  EXPECT_EQ(a.rotation, b.rotation);
  EXPECT_NEAR(a.ratios(0), 0.5, 1e-12);
}

TEST(FixRotation, ZeroLoadings) {
  const auto m = FactorModel::discrete(Vector::Zero(2), Matrix::Zero(2, 2));
  const auto rot = fix_rotation(m);
  EXPECT_EQ(rot.ratios.sum(), 0.0);
  EXPECT_THROW(fix_rotation(FactorModel::discrete(Vector::Zero(2), Matrix::Zero(2, 0))), RangeError);
}

TEST(Canonicalize, PreservesDensity) {
  tk::Rng rng(15);
  const auto s = tk::reader_schema();
  for (int t = 0; t < 10; ++t) {
    const auto m = random_model(rng, s, 2, t % 2 ? 2 : 0, false);
    const auto c = canonicalize(m);
    EXPECT_TRUE(c.is_canonical());
    const Vector x = tk::gaussian_vector(rng, m.p_x());
    for (auto st : enumerate_allowed_masks(s, 100)) {
      const double d = observed_density(m, s, x, st).density;
      EXPECT_NEAR(observed_density(c, s, x, st).density, d, 1e-12 * std::max(1.0, d));
    }
  }
}

TEST(Bic, ParameterCount) {
  EXPECT_EQ(bic_parameter_count(6, 2), 17);
  EXPECT_EQ(bic_parameter_count(6, 0), 6);
  EXPECT_EQ(bic_parameter_count(6, 3), 6 + 18 - 3);
  EXPECT_EQ(bic_parameter_count(6, 2, 3), 17 + 6 + 6);
  EXPECT_NEAR(bic_value(17, 100, -50.0), 17 * std::log(100.0) + 100.0, 1e-12);
}

namespace {

double gradient_fd_error(const detail::FactorProblem& prob, const Vector& th, double lambda) {
  Vector g;
  prob.evaluate(th, lambda, &g);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < th.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(th(i)));
    Vector tp = th, tm = th;
    tp(i) += h;
    tm(i) -= h;
    const double fd = (prob.evaluate(tp, lambda, nullptr) - prob.evaluate(tm, lambda, nullptr)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g(i)) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

FactorData synthetic_data(tk::Rng& rng, const FactorModel& truth, const VariableSchema& s, int n) {
  // ancestral sampling: y from pi, then x from its component normal
  const auto mw = mixture_weights(s, truth);
  DiscreteSampler sampler(mw.states, mw.weights);
  FactorData d;
  d.x.resize(n, truth.p_x());
  const Matrix sx = marginal_x_covariance(truth);
  const Matrix l = sx.llt().matrixL();
  for (int i = 0; i < n; ++i) {
    const StateMask y = sampler.draw(rng);
    d.rows.push_back(decode_state(s, DummyState::from_mask(y, s.q())));
    if (truth.p_x() > 0) {
      const Vector mean = truth.mu_x + truth.w_load * truth.g.transpose() * state_vector(y, s.q());
      d.x.row(i) = (mean + l * tk::gaussian_vector(rng, truth.p_x())).transpose();
    }
  }
  return d;
}

detail::FactorProblem make_problem(const VariableSchema& s, const FactorData& d, int pz) {
  detail::FactorProblem p;
  p.schema = &s;
  p.L = {s.q(), pz, d.p_x()};
  const auto allowed = enumerate_allowed_masks(s, 1000);
  p.y_allowed.resize(static_cast<Eigen::Index>(allowed.size()), s.q());
  for (std::size_t k = 0; k < allowed.size(); ++k) p.y_allowed.row(k) = state_vector(allowed[k], s.q()).transpose();
  p.y_rows.resize(static_cast<Eigen::Index>(d.n()), s.q());
  for (std::size_t i = 0; i < d.n(); ++i) p.y_rows.row(i) = state_vector(encode_record(s, d.rows[i]).mask(), s.q()).transpose();
  p.x = d.x;
  p.n = static_cast<double>(d.n());
  p.y_mean = p.y_rows.colwise().mean().transpose();
  p.y_second = p.y_rows.transpose() * p.y_rows / p.n;
  p.comb = combined_loading_coefficients(s);
  return p;
}

}  // namespace

TEST(FactorFit, GradientMatchesFiniteDifferences) {
  tk::Rng rng(16);
  const auto s = tk::reader_schema();
  for (int t = 0; t < 6; ++t) {
    const int px = t % 2 ? 2 : 0;
    const int pz = 1 + t % 3;
    const auto truth = random_model(rng, s, pz, px);
    const auto d = synthetic_data(rng, truth, s, 60);
    const auto prob = make_problem(s, d, pz);
    const Vector th = tk::gaussian_vector(rng, prob.L.size(), 0.5);
    EXPECT_LT(gradient_fd_error(prob, th, 0.0), 1e-6) << "trial " << t;
    EXPECT_LT(gradient_fd_error(prob, th, 3.0), 1e-6) << "trial " << t;
  }
}

TEST(FactorFit, ObjectiveMatchesDensity) {
  tk::Rng rng(17);
  const auto s = tk::reader_schema();
  const auto truth = random_model(rng, s, 2, 2);
  const auto d = synthetic_data(rng, truth, s, 40);
  const auto prob = make_problem(s, d, 2);
  Vector th = tk::gaussian_vector(rng, prob.L.size(), 0.5);
  double nll = 0.0;
  prob.evaluate(th, 0.0, nullptr, &nll);
  EXPECT_NEAR(nll, factor_nll(prob.unpack(th), s, d), 1e-10);
}

TEST(FactorFit, ZeroDimensionGivesFrequencies) {
  const auto s = tk::reader_schema();
  const auto rows = sample_records(tk::reader_params(), s, 500, 21);
  FactorData d{rows, Matrix(500, 0)};
  FactorFitConfig cfg;
  cfg.p_z = 0;
  cfg.grad_tol = 1e-10;
  const auto fit = fit_factor_model(s, d, cfg);
  EXPECT_TRUE(fit.converged);
  EXPECT_LT(max_abs(fit.mean - fit.empirical_mean), 1e-8);
  EXPECT_EQ(fit.parameter_count, 6);
}

TEST(FactorFit, IndependentStartHasIndependentNll) {
  const auto s = tk::reader_schema();
  const auto rows = sample_records(tk::reader_params(), s, 300, 22);
  const auto sc = state_counts(s, rows);
  const auto b = detail::empirical_biases(s, sc, 30.0, nullptr);
  Vector bv(6);
  for (std::size_t j = 0; j < s.size(); ++j) bv.segment(s.block(j).offset, s.block(j).size) = b[j];
  const auto m = FactorModel::discrete(bv, Matrix::Zero(6, 2));
  double ind = 0.0;
  for (const auto& r : rows) ind -= std::log(independent_pmf(s, bv, encode_record(s, r)));
  EXPECT_NEAR(factor_nll(m, s, FactorData{rows, Matrix(300, 0)}) * 300.0, ind, 1e-9);
}

TEST(FactorFit, ReaderStyleMeansAndEqualNorms) {
  const auto s = tk::reader_schema();
  const auto rows = sample_records(tk::reader_params(), s, 941, 23);
  FactorFitConfig cfg;
  cfg.p_z = 2;
  const auto fit = fit_factor_model(s, FactorData{rows, Matrix(941, 0)}, cfg);
  EXPECT_LT(max_abs(fit.mean - fit.empirical_mean), 1e-3);
  EXPECT_LT(fit.norm_spread, 1e-4);
  EXPECT_TRUE(fit.model.is_canonical());
  const Matrix gtg = fit.model.g.transpose() * fit.model.g;
  EXPECT_NEAR(gtg(0, 1), 0.0, 1e-10);
  EXPECT_GE(fit.ratios(0), fit.ratios(1));
  EXPECT_EQ(fit.restart_nll.size(), 3U);
}

TEST(FactorFit, Deterministic) {
  const auto s = tk::reader_schema();
  const auto rows = sample_records(tk::reader_params(), s, 200, 24);
  FactorFitConfig cfg;
  cfg.restarts = 2;
  const auto a = fit_factor_model(s, FactorData{rows, Matrix(200, 0)}, cfg);
  const auto b = fit_factor_model(s, FactorData{rows, Matrix(200, 0)}, cfg);
  EXPECT_EQ(a.nll, b.nll);
  EXPECT_EQ(a.model.g, b.model.g);
}

TEST(FactorFit, ContinuousBlockBeatsTruthNll) {
  tk::Rng rng(25);
  const auto s = tk::schema_of({{VariableKind::Categorical, 3}, {VariableKind::Ordinal, 3}});
  const auto truth = random_model(rng, s, 1, 3);
  const auto d = synthetic_data(rng, truth, s, 800);
  FactorFitConfig cfg;
  cfg.p_z = 1;
  cfg.norm_penalty_schedule = {0.0};
  const auto fit = fit_factor_model(s, d, cfg);
  EXPECT_TRUE(fit.converged) << fit.status;
  EXPECT_LE(fit.nll, factor_nll(truth, s, d) + 1e-9);
  EXPECT_LT(max_abs(fit.model.mu_x - d.x.colwise().mean().transpose() +
                    fit.model.w_load * fit.model.g.transpose() *
                        (Vector(fit.empirical_mean))),
            1e-4);
}

TEST(FactorFit, EmptyDataRejected) {
  EXPECT_THROW(fit_factor_model(tk::reader_schema(), FactorData{{}, Matrix(0, 0)}, FactorFitConfig{}), IngestError);
}

TEST(Bic, IndependentDataPicksSmallDimension) {
  const auto s = tk::reader_schema();
  tk::Rng rng(26);
  Vector b = tk::gaussian_vector(rng, 6, 0.5);
  const auto truth = FactorModel::discrete(b, Matrix::Zero(6, 0));
  const auto d = synthetic_data(rng, truth, s, 2000);
  FactorFitConfig cfg;
  cfg.restarts = 2;
  const auto table = select_dimension_bic(s, d, 0, 2, cfg);
  ASSERT_EQ(table.rows.size(), 3U);
  EXPECT_LE(table.chosen, 1);
  EXPECT_GT(table.margin, 0.0);
  EXPECT_EQ(table.rows[2].k, 17);
}

TEST(Biplot, ZeroLoadings) {
  const auto s = tk::reader_schema();
  const auto m = FactorModel::discrete(Vector::Zero(6), Matrix::Zero(6, 2));
  const auto rows = sample_records(tk::reader_params(), s, 50, 27);
  const auto bd = biplot_data(m, s, FactorData{rows, Matrix(50, 0)});
  for (const auto& p : bd.points) EXPECT_EQ(p.score.norm(), 0.0);
  for (const auto& a : bd.arrows) EXPECT_EQ(a.g.norm(), 0.0);
  EXPECT_EQ(bd.arrows.size(), 9U);
}

TEST(Biplot, IdenticalRecordsMerge) {
  const auto s = tk::reader_schema();
  tk::Rng rng(28);
  const auto m = FactorModel::discrete(tk::gaussian_vector(rng, 6), tk::gaussian_matrix(rng, 6, 2));
  const std::vector<Record> rows{{1, 2, 3}, {0, 0, 0}, {1, 2, 3}};
  const auto bd = biplot_data(m, s, FactorData{rows, Matrix(3, 0)});
  ASSERT_EQ(bd.points.size(), 2U);
  EXPECT_EQ(bd.points[0].row_id, 1U);
  EXPECT_EQ(bd.points[0].multiplicity, 2U);
  const auto svg = biplot_svg(bd);
  // area doubles: r = 3 sqrt(2)
  EXPECT_NE(svg.find("r=\"4.24\""), std::string::npos);
  EXPECT_NE(svg.find("r=\"3.00\""), std::string::npos);
}

TEST(Biplot, AxisLabelsAndRatios) {
  EXPECT_EQ(axis_label(0, 62.3), "PC1 (62.3%)");
  auto m = FactorModel::discrete(Vector::Zero(2), Matrix::Zero(2, 2));
  m.g << std::sqrt(3.0), 0.0, 0.0, 1.0;
  const auto bd = biplot_data(m, tk::schema_of({{VariableKind::Categorical, 2}, {VariableKind::Categorical, 2}}),
                              FactorData{{{0, 1}}, Matrix(1, 0)});
  EXPECT_NEAR(bd.ratios_percent(0), 75.0, 1e-12);
  EXPECT_NEAR(bd.ratios_percent(1), 25.0, 1e-12);
  EXPECT_LE(bd.ratios_percent.sum(), 100.0 + 1e-9);
  EXPECT_NE(biplot_svg(bd).find("PC1 (75.0%)"), std::string::npos);
}

TEST(Biplot, PaddedForOneDimension) {
  const auto s = tk::schema_of({{VariableKind::Categorical, 2}});
  const auto m = FactorModel::discrete(Vector::Zero(1), Matrix::Constant(1, 1, 2.0));
  const auto bd = biplot_data(m, s, FactorData{{{1}}, Matrix(1, 0)});
  EXPECT_TRUE(bd.padded);
  EXPECT_EQ(bd.dims, 2);
  EXPECT_EQ(bd.points[0].score(1), 0.0);
  EXPECT_EQ(scores_csv(bd), "row_id,pc1,pc2,multiplicity\n1,2,0,1\n");
  EXPECT_EQ(loadings_csv(bd), "variable,level_label,pc1,pc2\nv0,0,-1,0\nv0,1,1,0\n");
}

TEST(Biplot, ExportWritesDeterministicFiles) {
  const auto s = tk::reader_schema();
  tk::Rng rng(29);
  const auto m = fix_rotation(FactorModel::discrete(tk::gaussian_vector(rng, 6), tk::gaussian_matrix(rng, 6, 2))).model;
  const auto rows = sample_records(tk::reader_params(), s, 100, 30);
  const auto dir = std::filesystem::temp_directory_path() / "grasscat_biplot_test";
  std::filesystem::create_directories(dir);
  auto read = [](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  BiplotPaths p1{(dir / "a.svg").string(), (dir / "a_scores.csv").string(), (dir / "a_load.csv").string()};
  BiplotPaths p2{(dir / "b.svg").string(), (dir / "b_scores.csv").string(), (dir / "b_load.csv").string()};
  biplot_export(m, s, FactorData{rows, Matrix(100, 0)}, p1);
  biplot_export(m, s, FactorData{rows, Matrix(100, 0)}, p2);
  EXPECT_EQ(read(p1.svg), read(p2.svg));
  EXPECT_EQ(read(p1.scores), read(p2.scores));
  EXPECT_EQ(read(p1.loadings), read(p2.loadings));
  EXPECT_FALSE(read(p1.svg).empty());
  EXPECT_THROW(biplot_export(m, s, FactorData{rows, Matrix(100, 0)}, {(dir / "no/such/x.svg").string(), "", ""}),
               IngestError);
  std::filesystem::remove_all(dir);
}

#pragma once

// Brute-force reference computations. Deliberately shares no determinant or
// minor code with grassmann.hpp: small minors use cofactor expansion, larger
// ones a hand-written full-pivot elimination.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "grasscat/errors.hpp"
#include "grasscat/grassmann.hpp"
#include "grasscat/linalg.hpp"
#include "grasscat/schema.hpp"

namespace grasscat::oracle {

inline constexpr int kCofactorLimit = 8;

/// Laplace expansion along rows, memoised over the set of used columns.
inline double cofactor_determinant(const Matrix& m) {
  const int n = static_cast<int>(m.rows());
  if (n == 0) return 1.0;
  // value[cols] = det of the submatrix formed by the last popcount(cols) rows and columns `cols`
  std::vector<double> value(std::size_t{1} << n, 0.0);
  value[0] = 1.0;
  for (unsigned cols = 1; cols < (1U << n); ++cols) {
    const int k = std::popcount(cols);
    const int row = n - k;
    double acc = 0.0;
    int sign_pos = 0;
    for (int c = 0; c < n; ++c) {
      if (!(cols & (1U << c))) continue;
      const double term = m(row, c) * value[cols & ~(1U << c)];
      acc += (sign_pos % 2 == 0) ? term : -term;
      ++sign_pos;
    }
    value[cols] = acc;
  }
  return value[(1U << n) - 1];
}

inline double elimination_determinant(Matrix a) {
  const Eigen::Index n = a.rows();
  double det = 1.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index pr = k;
    Eigen::Index pc = k;
    double best = 0.0;
    for (Eigen::Index i = k; i < n; ++i) {
      for (Eigen::Index j = k; j < n; ++j) {
        if (std::abs(a(i, j)) > best) {
          best = std::abs(a(i, j));
          pr = i;
          pc = j;
        }
      }
    }
    if (best == 0.0) return 0.0;
    if (pr != k) {
      a.row(pr).swap(a.row(k));
      det = -det;
    }
    if (pc != k) {
      a.col(pc).swap(a.col(k));
      det = -det;
    }
    det *= a(k, k);
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (Eigen::Index j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }
  return det;
}

inline double reference_determinant(const Matrix& m) {
  return m.rows() <= kCofactorLimit ? cofactor_determinant(m) : elimination_determinant(m);
}

/// All 2^q probabilities with derived moments.
struct FullTable {
  int q = 0;
  std::vector<double> prob;  ///< indexed by state mask

  double sum() const {
    double s = 0.0;
    for (double p : prob) s += p;
    return s;
  }

  double min() const {
    double m = std::numeric_limits<double>::infinity();
    for (double p : prob) m = std::min(m, p);
    return m;
  }

  Vector mean() const {
    Vector mu = Vector::Zero(q);
    for (std::size_t s = 0; s < prob.size(); ++s) {
      for (int r = 0; r < q; ++r) {
        if ((s >> r) & 1U) mu(r) += prob[s];
      }
    }
    return mu;
  }

  Matrix covariance() const {
    const Vector mu = mean();
    Matrix e = Matrix::Zero(q, q);
    for (std::size_t s = 0; s < prob.size(); ++s) {
      for (int r = 0; r < q; ++r) {
        if (!((s >> r) & 1U)) continue;
        for (int t = 0; t < q; ++t) {
          if ((s >> t) & 1U) e(r, t) += prob[s];
        }
      }
    }
    return e - mu * mu.transpose();
  }

  Matrix correlation() const {
    const Matrix c = covariance();
    Matrix out(q, q);
    for (int r = 0; r < q; ++r) {
      for (int t = 0; t < q; ++t) out(r, t) = c(r, t) / std::sqrt(c(r, r) * c(t, t));
    }
    return out;
  }

  /// Probabilities of the states allowed by `schema`, in enumeration order.
  std::vector<double> allowed(const VariableSchema& schema) const {
    std::vector<double> out;
    for (StateMask m : enumerate_allowed_masks(schema)) out.push_back(prob[m]);
    return out;
  }
};

inline FullTable brute_force_table(const Matrix& lambda, int cap_q = 20) {
  const int q = static_cast<int>(lambda.rows());
  if (q > cap_q) throw EnumerationError("oracle table: q=" + std::to_string(q) + " exceeds cap");
  const double det = reference_determinant(lambda);
  if (det == 0.0) throw ParameterError("oracle: Lambda is singular");
  Matrix lmi = lambda - Matrix::Identity(q, q);
  FullTable t;
  t.q = q;
  t.prob.resize(std::size_t{1} << q);
  for (StateMask s = 0; s < (StateMask{1} << q); ++s) {
    IndexList idx;
    for (int r = 0; r < q; ++r) {
      if ((s >> r) & 1U) idx.push_back(r);
    }
    Matrix sub(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < idx.size(); ++j) sub(Eigen::Index(i), Eigen::Index(j)) = lmi(idx[i], idx[j]);
    }
    t.prob[s] = reference_determinant(sub) / det;
  }
  return t;
}

inline FullTable brute_force_table(const GrassmannParams& p, int cap_q = 20) {
  return brute_force_table(p.lambda(), cap_q);
}

/// P(y_{t1} = 1, y_{t0} = 0) by direct summation.
inline double oracle_pattern(const FullTable& table, const IndexList& t1, const IndexList& t0) {
  const StateMask ones = indices_to_mask(t1);
  const StateMask zeros = indices_to_mask(t0);
  double acc = 0.0;
  for (StateMask s = 0; s < table.prob.size(); ++s) {
    if ((s & ones) == ones && (s & zeros) == 0) acc += table.prob[s];
  }
  return acc;
}

/// Marginal table over the indices `t` (result indexed by masks over positions of t).
inline std::vector<double> oracle_marginal(const FullTable& table, const IndexList& t) {
  std::vector<double> out(std::size_t{1} << t.size(), 0.0);
  for (StateMask s = 0; s < table.prob.size(); ++s) {
    StateMask key = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if ((s >> t[i]) & 1U) key |= StateMask{1} << i;
    }
    out[key] += table.prob[s];
  }
  return out;
}

/// Conditional table over S given the observed pattern; nullopt when the
/// conditioning event has (numerically) zero probability.
inline std::optional<std::vector<double>> oracle_conditional(const FullTable& table, const IndexPartition& part,
                                                             double zero_tol = 1e-14) {
  const double denom = oracle_pattern(table, part.t1, part.t0);
  if (!(std::abs(denom) > zero_tol)) return std::nullopt;
  std::vector<double> out(std::size_t{1} << part.s.size(), 0.0);
  for (StateMask key = 0; key < out.size(); ++key) {
    IndexList ones = part.t1;
    IndexList zeros = part.t0;
    for (std::size_t i = 0; i < part.s.size(); ++i) ((key >> i) & 1U ? ones : zeros).push_back(part.s[i]);
    out[key] = oracle_pattern(table, ones, zeros) / denom;
  }
  return out;
}

/// Gauss-Hermite rule for the standard normal weight (probabilists'
/// convention): sum_i w_i f(x_i) ~ E[f(Z)], Z ~ N(0, 1). Golub-Welsch.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline QuadratureRule gauss_hermite(int n) {
  Matrix jac = Matrix::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    jac(i, i - 1) = std::sqrt(static_cast<double>(i));
    jac(i - 1, i) = jac(i, i - 1);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jac);
  QuadratureRule rule;
  for (int i = 0; i < n; ++i) {
    rule.nodes.push_back(es.eigenvalues()(i));
    const double v0 = es.eigenvectors()(0, i);
    rule.weights.push_back(v0 * v0);
  }
  return rule;
}

/// E[f(X)] for X ~ N(mu, cov) with a tensor Gauss-Hermite rule (dim <= 3).
template <class F>
double gaussian_expectation(const Vector& mu, const Matrix& cov, int nodes, F&& f) {
  const auto dim = mu.size();
  if (dim == 0) return f(Vector(0));
  const Matrix l = cov.llt().matrixL();
  const auto rule = gauss_hermite(nodes);
  std::vector<int> idx(static_cast<std::size_t>(dim), 0);
  double acc = 0.0;
  Vector t(dim);
  while (true) {
    double w = 1.0;
    for (Eigen::Index d = 0; d < dim; ++d) {
      t(d) = rule.nodes[static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
      w *= rule.weights[static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
    }
    acc += w * f(Vector(mu + l * t));
    Eigen::Index d = 0;
    for (; d < dim; ++d) {
      if (++idx[static_cast<std::size_t>(d)] < nodes) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
    if (d == dim) break;
  }
  return acc;
}

inline double normal_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const auto dim = x.size();
  if (dim == 0) return 1.0;
  Eigen::LLT<Matrix> llt(cov);
  const Vector z = llt.matrixL().solve(x - mean);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return std::exp(-0.5 * z.squaredNorm() - 0.5 * logdet -
                  0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi));
}

}  // namespace grasscat::oracle

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "grasscat/errors.hpp"
#include "grasscat/linalg.hpp"
#include "grasscat/schema.hpp"

namespace grasscat {

/// Probabilities in [-kProbabilityClamp, 0) are reported as exactly 0.
inline constexpr double kProbabilityClamp = 1e-12;

/// Parameter of the (inverted) Grassmann distribution over q binary dummies:
/// p(y) = det(Lambda_{R1 R1} - I) / det(Lambda), R1 = {r : y_r = 1}.
/// Holds Lambda and its inverse Sigma.
class GrassmannParams {
 public:
  GrassmannParams() = default;

  static GrassmannParams from_lambda(Matrix lambda) {
    GrassmannParams p;
    require_square(lambda, "Lambda");
    p.sigma_ = checked_inverse(lambda, "Lambda");
    p.lambda_ = std::move(lambda);
    p.finish();
    return p;
  }

  static GrassmannParams from_sigma(Matrix sigma) {
    GrassmannParams p;
    require_square(sigma, "Sigma");
    p.lambda_ = checked_inverse(sigma, "Sigma");
    p.sigma_ = std::move(sigma);
    p.finish();
    return p;
  }

  int q() const { return static_cast<int>(lambda_.rows()); }
  const Matrix& lambda() const { return lambda_; }
  const Matrix& sigma() const { return sigma_; }
  double det_lambda() const { return det_lambda_; }

 private:
  static void require_square(const Matrix& m, const char* what) {
    if (m.rows() != m.cols()) throw ParameterError(std::string(what) + " must be square");
    if (!m.allFinite()) throw ParameterError(std::string(what) + " has non-finite entries");
  }

  void finish() {
    det_lambda_ = determinant(lambda_);
    if (q() == 0) return;
    const double resid = max_abs(lambda_ * sigma_ - Matrix::Identity(q(), q()));
    const double scale = std::max(1.0, lambda_.lpNorm<Eigen::Infinity>() * sigma_.lpNorm<Eigen::Infinity>());
    if (!(resid <= 1e-10 * scale)) {
      throw ParameterError("Lambda * Sigma deviates from identity by " + std::to_string(resid));
    }
  }

  Matrix lambda_;
  Matrix sigma_;
  double det_lambda_ = 1.0;
};

inline double clamp_probability(double p) { return (p < 0.0 && p >= -kProbabilityClamp) ? 0.0 : p; }

/// Joint probability of the state with ones at `mask`.
inline double joint_probability(const GrassmannParams& p, StateMask mask) {
  if (p.det_lambda() == 0.0) throw ParameterError("Lambda is singular");
  return clamp_probability(principal_minor_minus_identity(p.lambda(), mask) / p.det_lambda());
}

inline double joint_probability(const GrassmannParams& p, std::span<const std::uint8_t> y) {
  if (static_cast<int>(y.size()) != p.q()) {
    throw RangeError("state length " + std::to_string(y.size()) + " != q=" + std::to_string(p.q()));
  }
  IndexList ones;
  for (std::size_t r = 0; r < y.size(); ++r) {
    if (y[r]) ones.push_back(static_cast<int>(r));
  }
  if (ones.empty()) return clamp_probability(1.0 / p.det_lambda());
  Matrix sub = principal(p.lambda(), ones);
  sub.diagonal().array() -= 1.0;
  return clamp_probability(determinant(sub) / p.det_lambda());
}

inline double joint_probability(const GrassmannParams& p, const DummyState& y) {
  return joint_probability(p, std::span<const std::uint8_t>(y.bits));
}

/// Split of the dummy indices into free indices S and observed indices
/// T = T1 (observed 1) + T0 (observed 0).
struct IndexPartition {
  IndexList s;
  IndexList t1;
  IndexList t0;

  IndexList t() const {
    IndexList out = t1;
    out.insert(out.end(), t0.begin(), t0.end());
    return out;
  }

  void validate(int q) const {
    std::vector<int> seen(static_cast<std::size_t>(q), 0);
    auto mark = [&](const IndexList& idx, const char* name) {
      for (int i : idx) {
        if (i < 0 || i >= q) {
          throw RangeError(std::string("partition index ") + std::to_string(i) + " in " + name + " outside 0.." +
                           std::to_string(q - 1));
        }
        if (seen[static_cast<std::size_t>(i)]++) {
          throw RangeError("partition index " + std::to_string(i) + " appears twice");
        }
      }
    };
    mark(s, "S");
    mark(t1, "T1");
    mark(t0, "T0");
    for (int r = 0; r < q; ++r) {
      if (!seen[static_cast<std::size_t>(r)]) throw RangeError("partition does not cover index " + std::to_string(r));
    }
  }
};

/// Parameter of the marginal over T: the Sigma_TT block.
inline GrassmannParams marginal_params(const GrassmannParams& p, const IndexList& t) {
  if (t.empty()) throw RangeError("marginal index set must be nonempty");
  for (int i : t) {
    if (i < 0 || i >= p.q()) throw RangeError("marginal index " + std::to_string(i) + " out of range");
  }
  return GrassmannParams::from_sigma(principal(p.sigma(), t));
}

/// Conditional parameter over S by the Lambda route:
/// [Lambda_SS - Lambda_ST1 (Lambda_T1T1 - I)^{-1} Lambda_T1S]^{-1} (returned as its inverse).
inline Matrix conditional_lambda(const Matrix& lambda, const IndexPartition& part) {
  Matrix cond = principal(lambda, part.s);
  if (!part.t1.empty()) {
    Matrix pivot = principal(lambda, part.t1);
    pivot.diagonal().array() -= 1.0;
    Eigen::PartialPivLU<Matrix> lu(pivot);
    if (!(lu.rcond() > 1e-14)) throw ConditioningError("Lambda_T1T1 - I is singular: conditioning event has zero probability");
    cond -= submatrix(lambda, part.s, part.t1) * lu.solve(submatrix(lambda, part.t1, part.s));
  }
  return cond;
}

/// The sign-flipped Sigma-tilde of the conditional formula, laid out in the
/// original index order.
inline Matrix sigma_tilde(const Matrix& sigma, const IndexPartition& part) {
  Matrix st = sigma;
  for (int c : part.t1) st.col(c) = -st.col(c);
  for (int r : part.t1) st(r, r) += 1.0;
  return st;
}

/// Conditional parameter p(y_S | y_T) by the Schur complement of Sigma-tilde,
/// cross-checked against the Lambda route.
inline GrassmannParams conditional_params(const GrassmannParams& p, const IndexPartition& part) {
  part.validate(p.q());
  if (part.s.empty()) return GrassmannParams::from_lambda(Matrix(0, 0));
  const IndexList t = part.t();
  const Matrix st = sigma_tilde(p.sigma(), part);
  Matrix schur = principal(st, part.s);
  if (!t.empty()) {
    Eigen::PartialPivLU<Matrix> lu(principal(st, t));
    if (!(lu.rcond() > 1e-14)) throw ConditioningError("Sigma-tilde_TT is singular: conditioning event has zero probability");
    schur -= submatrix(st, part.s, t) * lu.solve(submatrix(st, t, part.s));
  }
  const Matrix lam = conditional_lambda(p.lambda(), part);
  auto out = GrassmannParams::from_sigma(schur);
  const double diff = max_abs(out.lambda() - lam);
  if (!(diff <= 1e-9 * std::max(1.0, max_abs(lam)))) {
    throw ParameterError("Sigma-tilde and Lambda forms of the conditional disagree by " + std::to_string(diff));
  }
  return out;
}

struct Moments {
  Vector mean;
  Matrix cov;
};

/// Mean 1 - Sigma_rr, covariance -Sigma_rs Sigma_sr off the diagonal and the
/// Bernoulli variance Sigma_rr (1 - Sigma_rr) on it.
inline Moments moments(const GrassmannParams& p) {
  const Matrix& s = p.sigma();
  Moments m;
  m.mean = Vector::Ones(p.q()) - s.diagonal();
  m.cov = -s.cwiseProduct(s.transpose());
  for (int r = 0; r < p.q(); ++r) m.cov(r, r) = s(r, r) * (1.0 - s(r, r));
  return m;
}

struct ZeroConditionalMoments {
  double mean = 0.0;  ///< E[y_r | rest = 0]
  double cov = 0.0;   ///< Cov[y_r, y_s | rest = 0]
};

inline ZeroConditionalMoments conditional_zero_moments(const GrassmannParams& p, int r, int s) {
  if (r < 0 || s < 0 || r >= p.q() || s >= p.q()) throw RangeError("index out of range");
  const Matrix& l = p.lambda();
  if (l(r, r) == 0.0) throw DegenerateError("Lambda_rr = 0");
  const double det2 = l(r, r) * l(s, s) - l(r, s) * l(s, r);
  if (det2 == 0.0) throw DegenerateError("Lambda_rr Lambda_ss - Lambda_rs Lambda_sr = 0");
  return {1.0 - 1.0 / l(r, r), -l(r, s) * l(s, r) / (det2 * det2)};
}

struct P0Report {
  double min_probability = 0.0;
  StateMask argmin = 0;
  double sum = 0.0;
  bool pass = false;
};

/// Enumerates all 2^q joint probabilities.
inline P0Report check_p0(const GrassmannParams& p, int cap_q = EnumerationCaps{}.full_q) {
  if (p.q() > cap_q) {
    throw EnumerationError("check_p0: q=" + std::to_string(p.q()) + " exceeds enumeration cap " +
                           std::to_string(cap_q) +
                           "; rely on the structured-parameter positivity checks instead");
  }
  P0Report rep;
  rep.min_probability = std::numeric_limits<double>::infinity();
  const StateMask n = StateMask{1} << p.q();
  for (StateMask m = 0; m < n; ++m) {
    const double pr = principal_minor_minus_identity(p.lambda(), m) / p.det_lambda();
    rep.sum += pr;
    if (pr < rep.min_probability) {
      rep.min_probability = pr;
      rep.argmin = m;
    }
  }
  rep.pass = rep.min_probability >= -kProbabilityClamp && std::abs(rep.sum - 1.0) <= 1e-10;
  return rep;
}

/// Probability of a partial pattern (ones at t1, zeros at t0; others free)
/// through the marginal parameter.
inline double pattern_probability(const GrassmannParams& p, const IndexList& t1, const IndexList& t0) {
  IndexList t = t1;
  t.insert(t.end(), t0.begin(), t0.end());
  if (t.empty()) return 1.0;
  const auto marg = marginal_params(p, t);
  StateMask m = 0;
  for (std::size_t i = 0; i < t1.size(); ++i) m |= StateMask{1} << i;
  return joint_probability(marg, m);
}

}  // namespace grasscat

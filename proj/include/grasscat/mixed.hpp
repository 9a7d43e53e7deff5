#pragma once

// Continuous x (p) coupled to binary dummies y (q):
//   p(x, y = 1_R1) = pi_R1(Sigma) N(x | mu + Sigma G^T 1_R1, Sigma)
//   pi_R1(Sigma)  ~ det(Lambda_R1R1 - I) exp(1/2 1^T G Sigma G^T 1)
// Every normaliser is an explicit sum over the 2^q subsets.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "grasscat/errors.hpp"
#include "grasscat/grassmann.hpp"
#include "grasscat/linalg.hpp"

namespace grasscat {

struct MixedParams {
  Vector mu;       ///< p
  Matrix sigma;    ///< p x p
  Matrix lambda;   ///< q x q
  Matrix g_int;    ///< q x p, rows g_s^T

  int p() const { return static_cast<int>(mu.size()); }
  int q() const { return static_cast<int>(lambda.rows()); }

  void validate(int cap_q = EnumerationCaps::from_env().full_q) const {
    if (sigma.rows() != p() || sigma.cols() != p()) throw SchemaError("Sigma must be p x p");
    if (lambda.cols() != q()) throw SchemaError("Lambda must be square");
    if (g_int.rows() != q() || g_int.cols() != p()) throw SchemaError("G must be q x p");
    if (!mu.allFinite() || !sigma.allFinite() || !lambda.allFinite() || !g_int.allFinite()) {
      throw ParameterError("mixed parameters have non-finite entries");
    }
    if (p() > 0) {
      if (max_abs(sigma - sigma.transpose()) > 1e-12 * std::max(1.0, max_abs(sigma))) {
        throw ParameterError("Sigma is not symmetric");
      }
      Eigen::LLT<Matrix> llt(sigma);
      if (llt.info() != Eigen::Success) throw ParameterError("Sigma is not positive definite");
    }
    if (q() > cap_q) {
      throw EnumerationError("q=" + std::to_string(q()) + " exceeds the enumeration cap " + std::to_string(cap_q));
    }
    const StateMask n = StateMask{1} << q();
    for (StateMask m = 1; m < n; ++m) {
      const double d = principal_minor_minus_identity(lambda, m);
      if (d < -1e-10) {
        throw PositivityError("Lambda - I is not a P0-matrix: principal minor on {" + [&] {
          std::string s;
          for (int i : mask_to_indices(m)) s += (s.empty() ? "" : ",") + std::to_string(i);
          return s;
        }() + "} is " + std::to_string(d));
      }
    }
  }
};

/// Continuous I = (J, L, K), binary R = (S, U, T). L and U are marginalised.
struct MixedPartition {
  IndexList j, l, k;
  IndexList s, u, t;

  void validate(int p, int q) const {
    auto check = [](const std::vector<const IndexList*>& parts, int n, const char* what) {
      std::vector<int> seen(static_cast<std::size_t>(n), 0);
      for (const auto* part : parts) {
        for (int i : *part) {
          if (i < 0 || i >= n) throw RangeError(std::string(what) + " index " + std::to_string(i) + " out of range");
          if (seen[static_cast<std::size_t>(i)]++) throw RangeError(std::string(what) + " index " + std::to_string(i) + " repeated");
        }
      }
      for (int i = 0; i < n; ++i) {
        if (!seen[static_cast<std::size_t>(i)]) throw RangeError(std::string(what) + " index " + std::to_string(i) + " not assigned");
      }
    };
    check({&j, &l, &k}, p, "continuous");
    check({&s, &u, &t}, q, "binary");
  }
};

namespace detail {

inline Vector ones_of(StateMask m, int q) {
  Vector v = Vector::Zero(q);
  for (int i = 0; i < q; ++i) {
    if ((m >> i) & 1U) v(i) = 1.0;
  }
  return v;
}

inline double log_normal(const Vector& x, const Vector& mean, const Matrix& cov) {
  const auto d = x.size();
  if (d == 0) return 0.0;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw ParameterError("covariance block is not positive definite");
  const Vector z = llt.matrixL().solve(x - mean);
  return -0.5 * (z.squaredNorm() + 2.0 * llt.matrixLLT().diagonal().array().log().sum() +
                 static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
}

inline void require_enumerable(int q) {
  const int cap = EnumerationCaps::from_env().full_q;
  if (q > cap) throw EnumerationError("2^" + std::to_string(q) + " subsets exceed the enumeration cap (q <= " + std::to_string(cap) + ")");
}

/// det(Lambda_R1R1 - I) exp(1/2 h^T quad h + lin^T 1_R1) for every R1, h = 1_R1.
inline std::vector<double> subset_weights(const Matrix& lambda, const Matrix& quad, const Vector& lin) {
  const int q = static_cast<int>(lambda.rows());
  require_enumerable(q);
  const StateMask n = StateMask{1} << q;
  std::vector<double> w(static_cast<std::size_t>(n));
  for (StateMask m = 0; m < n; ++m) {
    const Vector h = ones_of(m, q);
    w[m] = principal_minor_minus_identity(lambda, m) * std::exp(0.5 * h.dot(quad * h) + lin.dot(h));
  }
  return w;
}

inline bool matches(StateMask m, StateMask y, StateMask fixed) { return (m & fixed) == (y & fixed); }

inline Matrix sub(const Matrix& m, const IndexList& r, const IndexList& c) { return m(r, c); }
inline Vector sub(const Vector& v, const IndexList& r) { return v(r); }

inline IndexList join(const IndexList& a, const IndexList& b) {
  IndexList o = a;
  o.insert(o.end(), b.begin(), b.end());
  return o;
}

}  // namespace detail

/// pi_R1(Sigma) for every subset mask, normalised.
inline std::vector<double> mixed_weights(const MixedParams& mp) {
  auto w = detail::subset_weights(mp.lambda, mp.g_int * mp.sigma * mp.g_int.transpose(), Vector::Zero(mp.q()));
  double z = 0.0;
  for (double v : w) z += v;
  if (!(z > 0.0) || !std::isfinite(z)) throw DegenerateError("mixed partition function is not positive and finite");
  for (double& v : w) v /= z;
  return w;
}

inline double mixed_joint_density(const MixedParams& mp, const Vector& x, StateMask y) {
  if (x.size() != mp.p()) throw RangeError("x has length " + std::to_string(x.size()) + ", expected " + std::to_string(mp.p()));
  if (mp.q() < 64 && (y >> mp.q()) != 0) throw InvalidStateError("y has bits beyond q");
  const auto w = mixed_weights(mp);
  const Vector mean = mp.mu + mp.sigma * mp.g_int.transpose() * detail::ones_of(y, mp.q());
  return w[y] * std::exp(detail::log_normal(x, mean, mp.sigma));
}

/// Density of (x_K, y_T). x and y are full length; only K and T entries are read.
inline double mixed_marginal_density(const MixedParams& mp, const MixedPartition& part, const Vector& x, StateMask y) {
  part.validate(mp.p(), mp.q());
  if (x.size() != mp.p()) throw RangeError("x has the wrong length");
  const auto w = mixed_weights(mp);
  const StateMask fixed = indices_to_mask(part.t);
  const IndexList all = [&] {
    IndexList a(static_cast<std::size_t>(mp.p()));
    for (int i = 0; i < mp.p(); ++i) a[static_cast<std::size_t>(i)] = i;
    return a;
  }();
  const Vector xk = detail::sub(x, part.k);
  const Matrix skk = detail::sub(mp.sigma, part.k, part.k);
  const Matrix ski = detail::sub(mp.sigma, part.k, all);
  double acc = 0.0;
  for (StateMask m = 0; m < w.size(); ++m) {
    if (!detail::matches(m, y, fixed) || w[m] == 0.0) continue;
    const Vector mean = detail::sub(mp.mu, part.k) + ski * mp.g_int.transpose() * detail::ones_of(m, mp.q());
    acc += w[m] * std::exp(detail::log_normal(xk, mean, skk));
  }
  return acc;
}

namespace detail {

struct ConditionalPieces {
  Matrix skk_inv;
  Vector dk;        ///< Sigma_KK^{-1} (x_K - mu_K)
  Vector lin;       ///< G Sigma_IK Sigma_KK^{-1} (x_K - mu_K)
  Vector mean_j;    ///< mu_J + Sigma_JK Sigma_KK^{-1} (x_K - mu_K)
  Matrix cov_j;     ///< Sigma_J|K
};

inline ConditionalPieces conditional_pieces(const MixedParams& mp, const MixedPartition& part, const Vector& x) {
  IndexList all(static_cast<std::size_t>(mp.p()));
  for (int i = 0; i < mp.p(); ++i) all[static_cast<std::size_t>(i)] = i;
  ConditionalPieces c;
  const Matrix skk = sub(mp.sigma, part.k, part.k);
  if (!part.k.empty()) {
    Eigen::LLT<Matrix> llt(skk);
    if (llt.info() != Eigen::Success) throw ParameterError("Sigma_KK is singular; cannot condition on x_K");
  }
  c.skk_inv = checked_inverse(skk, "Sigma_KK");
  c.dk = c.skk_inv * (sub(x, part.k) - sub(mp.mu, part.k));
  c.lin = mp.g_int * sub(mp.sigma, all, part.k) * c.dk;
  const Matrix sjk = sub(mp.sigma, part.j, part.k);
  c.mean_j = sub(mp.mu, part.j) + sjk * c.dk;
  c.cov_j = sub(mp.sigma, part.j, part.j) - sjk * c.skk_inv * sjk.transpose();
  return c;
}

}  // namespace detail

/// p(x_J, y_S | x_K, y_T) with x_L, y_U marginalised. Full-length x and y;
/// entries in L and U are ignored.
inline double mixed_conditional_density(const MixedParams& mp, const MixedPartition& part, const Vector& x,
                                        StateMask y) {
  part.validate(mp.p(), mp.q());
  if (x.size() != mp.p()) throw RangeError("x has the wrong length");
  const auto c = detail::conditional_pieces(mp, part, x);
  const IndexList f = detail::join(part.j, part.l);
  const Matrix sfk = detail::sub(mp.sigma, f, part.k);
  const Matrix s_fk = detail::sub(mp.sigma, f, f) - sfk * c.skk_inv * sfk.transpose();  // Sigma_(J+L)|K
  const Matrix g_rf = detail::sub(mp.g_int, [&] {
    IndexList r(static_cast<std::size_t>(mp.q()));
    for (int i = 0; i < mp.q(); ++i) r[static_cast<std::size_t>(i)] = i;
    return r;
  }(), f);
  const auto w = detail::subset_weights(mp.lambda, g_rf * s_fk * g_rf.transpose(), c.lin);
  // Sigma_J(J+L) - Sigma_JK Sigma_KK^-1 Sigma_K(J+L)
  const Matrix shift = detail::sub(mp.sigma, part.j, f) -
                       detail::sub(mp.sigma, part.j, part.k) * c.skk_inv * sfk.transpose();
  const StateMask st = indices_to_mask(detail::join(part.s, part.t));
  const StateMask t = indices_to_mask(part.t);
  const Vector xj = detail::sub(x, part.j);
  double num = 0.0, den = 0.0;
  for (StateMask m = 0; m < w.size(); ++m) {
    if (!detail::matches(m, y, t)) continue;
    den += w[m];
    if (!detail::matches(m, y, st) || w[m] == 0.0) continue;
    const Vector mean = c.mean_j + shift * g_rf.transpose() * detail::ones_of(m, mp.q());
    num += w[m] * std::exp(detail::log_normal(xj, mean, c.cov_j));
  }
  if (!(den > 0.0)) throw DegenerateError("conditioning event has zero probability");
  return num / den;
}

/// Same quantity without missing values (L, U empty), in the shorter form
/// where the linear tilt only runs over S_1.
inline double mixed_conditional_density_complete(const MixedParams& mp, const MixedPartition& part, const Vector& x,
                                                  StateMask y) {
  part.validate(mp.p(), mp.q());
  if (!part.l.empty() || !part.u.empty()) throw RangeError("complete-data conditional needs L and U empty");
  const auto c = detail::conditional_pieces(mp, part, x);
  IndexList r(static_cast<std::size_t>(mp.q()));
  for (int i = 0; i < mp.q(); ++i) r[static_cast<std::size_t>(i)] = i;
  const Matrix g_rj = detail::sub(mp.g_int, r, part.j);
  Vector lin_s = Vector::Zero(mp.q());
  for (int s : part.s) lin_s(s) = c.lin(s);
  const auto w = detail::subset_weights(mp.lambda, g_rj * c.cov_j * g_rj.transpose(), lin_s);
  const StateMask t = indices_to_mask(part.t);
  double den = 0.0;
  for (StateMask m = 0; m < w.size(); ++m) {
    if (detail::matches(m, y, t)) den += w[m];
  }
  if (!(den > 0.0)) throw DegenerateError("conditioning event has zero probability");
  const StateMask yy = y & indices_to_mask(detail::join(part.s, part.t));
  const Vector mean = c.mean_j + c.cov_j * g_rj.transpose() * detail::ones_of(yy, mp.q());
  return w[yy] / den * std::exp(detail::log_normal(detail::sub(x, part.j), mean, c.cov_j));
}

struct BinaryConditional {
  GrassmannParams params;  ///< over S, in part.s order
  bool p0_checked = false;
  bool p0_ok = false;
  double min_probability = 0.0;
};

/// y_S | x, y_T as a Grassmann distribution with Lambda - I equal to
/// (Lambda - I)_{S|T1} diag(exp(g_s^T (x - mu))).
inline BinaryConditional conditional_binary_given_continuous(const MixedParams& mp, const Vector& x,
                                                             const MixedPartition& part, StateMask y) {
  part.validate(mp.p(), mp.q());
  if (!part.j.empty() || !part.l.empty()) throw RangeError("binary conditional needs every continuous variable observed (J, L empty)");
  if (!part.u.empty()) throw RangeError("binary conditional needs U empty");
  if (x.size() != mp.p()) throw RangeError("x has the wrong length");
  IndexList t1;
  for (int t : part.t) {
    if ((y >> t) & 1U) t1.push_back(t);
  }
  Matrix k = mp.lambda;
  k.diagonal().array() -= 1.0;
  Matrix schur = detail::sub(k, part.s, part.s);
  if (!t1.empty()) {
    const Matrix ktt = detail::sub(k, t1, t1);
    Eigen::PartialPivLU<Matrix> lu(ktt);
    if (!(lu.rcond() > 1e-14)) throw ConditioningError("Lambda_T1T1 - I is singular");
    schur -= detail::sub(k, part.s, t1) * lu.solve(detail::sub(k, t1, part.s));
  }
  const Vector dx = x - mp.mu;
  for (std::size_t i = 0; i < part.s.size(); ++i) {
    schur.col(static_cast<Eigen::Index>(i)) *= std::exp(mp.g_int.row(part.s[i]).dot(dx));
  }
  schur.diagonal().array() += 1.0;
  BinaryConditional out;
  out.params = GrassmannParams::from_lambda(schur);
  const int cap = EnumerationCaps::from_env().full_q;
  if (out.params.q() <= cap) {
    const auto rep = check_p0(out.params, cap);
    out.p0_checked = true;
    out.p0_ok = rep.pass;
    out.min_probability = rep.min_probability;
  }
  return out;
}

}  // namespace grasscat

#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "grasscat/errors.hpp"

namespace grasscat {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<int>;
using StateMask = std::uint64_t;

/// Largest dummy dimension addressable by a StateMask.
inline constexpr int kMaxMaskBits = 62;

/// Enumeration limits. Allowed-state enumeration is bounded by the number of
/// records (product of level counts); full 2^q enumeration by q.
struct EnumerationCaps {
  std::size_t allowed_states = 1'000'000;
  int full_q = 20;

  /// Reads GRASSCAT_CAP: a state-count limit applied to both kinds of
  /// enumeration (full_q becomes floor(log2(cap))).
  static EnumerationCaps from_env() {
    EnumerationCaps caps;
    if (const char* env = std::getenv("GRASSCAT_CAP"); env != nullptr && *env != '\0') {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (end == env || *end != '\0' || v == 0) {
        throw ValidationError("GRASSCAT_CAP must be a positive integer, got '" + std::string(env) + "'");
      }
      caps.allowed_states = static_cast<std::size_t>(v);
      caps.full_q = std::min(kMaxMaskBits, static_cast<int>(std::bit_width(v)) - 1);
    }
    return caps;
  }
};

inline IndexList mask_to_indices(StateMask mask) {
  IndexList out;
  out.reserve(static_cast<std::size_t>(std::popcount(mask)));
  while (mask != 0) {
    out.push_back(std::countr_zero(mask));
    mask &= mask - 1;
  }
  return out;
}

inline StateMask indices_to_mask(const IndexList& idx) {
  StateMask m = 0;
  for (int i : idx) m |= StateMask{1} << i;
  return m;
}

inline Matrix submatrix(const Matrix& m, const IndexList& rows, const IndexList& cols) {
  return m(rows, cols);
}

inline Matrix principal(const Matrix& m, const IndexList& idx) { return m(idx, idx); }

/// Determinant by LU with partial pivoting; the empty matrix has determinant 1.
inline double determinant(const Matrix& m) {
  if (m.rows() == 0) return 1.0;
  return m.partialPivLu().determinant();
}

/// det(M_{idx,idx} - I) without materialising more than the k x k block.
inline double principal_minor_minus_identity(const Matrix& m, StateMask mask) {
  const IndexList idx = mask_to_indices(mask);
  if (idx.empty()) return 1.0;
  Matrix sub = m(idx, idx);
  sub.diagonal().array() -= 1.0;
  return sub.partialPivLu().determinant();
}

/// Inverse that refuses (numerically) singular input.
inline Matrix checked_inverse(const Matrix& m, const std::string& what) {
  if (m.rows() == 0) return Matrix(0, 0);
  Eigen::PartialPivLU<Matrix> lu(m);
  const double rc = lu.rcond();
  if (!(rc > 1e-14) || !std::isfinite(rc)) {
    throw ParameterError(what + " is singular (rcond=" + std::to_string(rc) + ")");
  }
  return lu.inverse();
}

/// Adjugate via SVD: adj(A) = det(U) det(V) V diag(prod_{j!=i} s_j) U^T.
/// Stays accurate when A is (nearly) singular, unlike det(A) * inv(A).
inline Matrix adjugate(const Matrix& a) {
  const Eigen::Index n = a.rows();
  if (n == 0) return Matrix(0, 0);
  if (n == 1) return Matrix::Ones(1, 1);
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  Vector cof(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double prod = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) prod *= s(j);
    }
    cof(i) = prod;
  }
  const double sign = svd.matrixU().determinant() * svd.matrixV().determinant();
  return sign * svd.matrixV() * cof.asDiagonal() * svd.matrixU().transpose();
}

/// Row dominance margin with signed diagonal: m_kk - sum_{l != k} |m_kl|.
inline double row_margin(const Matrix& m, Eigen::Index k) {
  return m(k, k) - (m.row(k).cwiseAbs().sum() - std::abs(m(k, k)));
}

inline Vector row_margins(const Matrix& m) {
  Vector out(m.rows());
  for (Eigen::Index k = 0; k < m.rows(); ++k) out(k) = row_margin(m, k);
  return out;
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Correctly rounded floating-point sum (Shewchuk partials, as in Python's
/// math.fsum). Order-independent, so aggregated and row-wise likelihoods agree
/// bit for bit.
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }

  /// Adds the exact product a*b (split into two doubles with fma).
  void add_product(double a, double b) {
    const double p = a * b;
    add(p);
    add(std::fma(a, b, -p));
  }

  double value() const {
    if (partials_.empty()) return 0.0;
    auto n = partials_.size();
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      const double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;
};

}  // namespace grasscat

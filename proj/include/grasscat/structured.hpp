#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "grasscat/errors.hpp"
#include "grasscat/grassmann.hpp"
#include "grasscat/linalg.hpp"
#include "grasscat/schema.hpp"

namespace grasscat {

/// Bounds on the diagonal of Omega.
inline constexpr double kOmegaEpsilon = 1e-6;
/// Strict dominance offset required of C.
inline constexpr double kDominanceTauC = 1e-8;

/// Parsimonious parameters: Lambda - I = (Psi^{-1} - I) + W diag(omega) V^T,
/// plus the auxiliary certificate matrix C.
struct StructuredParams {
  std::vector<Vector> b;  ///< per variable, length levels-1
  std::vector<Vector> w;  ///< per variable, length a
  Matrix v;               ///< q x a
  Vector omega;           ///< a entries in [eps, 1-eps]
  Matrix c;               ///< (q+a) x (q+a)

  int aux_dim() const { return static_cast<int>(omega.size()); }

  /// Independent model with the given biases and no auxiliary coupling:
  /// W = 0, V = 0, omega = 1/2, C = I.
  static StructuredParams independent(const VariableSchema& schema, int a) {
    StructuredParams sp;
    for (std::size_t j = 0; j < schema.size(); ++j) {
      sp.b.push_back(Vector::Zero(schema.block(j).size));
      sp.w.push_back(Vector::Zero(a));
    }
    sp.v = Matrix::Zero(schema.q(), a);
    sp.omega = Vector::Constant(a, 0.5);
    sp.c = Matrix::Identity(schema.q() + a, schema.q() + a);
    return sp;
  }

  void validate(const VariableSchema& schema) const {
    const int a = aux_dim();
    if (b.size() != schema.size() || w.size() != schema.size()) {
      throw SchemaError("structured parameters have " + std::to_string(b.size()) + " b-vectors and " +
                        std::to_string(w.size()) + " w-vectors for " + std::to_string(schema.size()) + " variables");
    }
    for (std::size_t j = 0; j < schema.size(); ++j) {
      if (b[j].size() != schema.block(j).size) {
        throw SchemaError("b-vector of '" + schema.variable(j).name + "' has length " + std::to_string(b[j].size()) +
                          ", expected " + std::to_string(schema.block(j).size));
      }
      if (w[j].size() != a) {
        throw SchemaError("w-vector of '" + schema.variable(j).name + "' has length " + std::to_string(w[j].size()) +
                          ", expected a=" + std::to_string(a));
      }
    }
    if (v.rows() != schema.q() || v.cols() != a) throw SchemaError("V must be q x a");
    if (c.rows() != schema.q() + a || c.cols() != schema.q() + a) throw SchemaError("C must be (q+a) x (q+a)");
    for (Eigen::Index k = 0; k < omega.size(); ++k) {
      if (!(omega(k) >= kOmegaEpsilon && omega(k) <= 1.0 - kOmegaEpsilon)) {
        throw ParameterError("omega[" + std::to_string(k) + "] = " + std::to_string(omega(k)) + " outside [1e-6, 1-1e-6]");
      }
    }
  }
};

/// Block-diagonal Psi^{-1} - I: categorical blocks repeat the row exp(b);
/// ordinal blocks carry cumulative exp(b_1 + ... + b_m) in the first row and
/// -1 on the subdiagonal.
inline Matrix build_psi_inv_minus_identity(const VariableSchema& schema, std::span<const Vector> b) {
  if (b.size() != schema.size()) throw SchemaError("one b-vector per variable required");
  Matrix p = Matrix::Zero(schema.q(), schema.q());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& blk = schema.block(j);
    if (b[j].size() != blk.size) {
      throw SchemaError("b-vector of '" + schema.variable(j).name + "' has length " + std::to_string(b[j].size()) +
                        ", expected " + std::to_string(blk.size));
    }
    if (schema.variable(j).kind == VariableKind::Categorical) {
      const Eigen::RowVectorXd row = b[j].array().exp().transpose();
      for (int k = 0; k < blk.size; ++k) p.block(blk.offset + k, blk.offset, 1, blk.size) = row;
    } else {
      double cum = 0.0;
      for (int m = 0; m < blk.size; ++m) {
        cum += b[j](m);
        p(blk.offset, blk.offset + m) = std::exp(cum);
      }
      for (int k = 1; k < blk.size; ++k) p(blk.offset + k, blk.offset + k - 1) = -1.0;
    }
  }
  return p;
}

/// q x a loading matrix: categorical blocks repeat w^T in every row, ordinal
/// blocks put w^T in the first row only.
inline Matrix build_w(const VariableSchema& schema, std::span<const Vector> w, int a) {
  if (w.size() != schema.size()) throw SchemaError("one w-vector per variable required");
  Matrix out = Matrix::Zero(schema.q(), a);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& blk = schema.block(j);
    if (w[j].size() != a) {
      throw SchemaError("w-vector of '" + schema.variable(j).name + "' has length " + std::to_string(w[j].size()) +
                        ", expected a=" + std::to_string(a));
    }
    const int rows = schema.variable(j).kind == VariableKind::Categorical ? blk.size : 1;
    for (int k = 0; k < rows; ++k) out.row(blk.offset + k) = w[j].transpose();
  }
  return out;
}

/// Lambda - I for the observed dummies.
inline Matrix lambda_minus_identity(const VariableSchema& schema, const StructuredParams& sp) {
  const Matrix w = build_w(schema, sp.w, sp.aux_dim());
  return build_psi_inv_minus_identity(schema, sp.b) + w * sp.omega.asDiagonal() * sp.v.transpose();
}

struct DominanceReport {
  Matrix b;            ///< (q+a) x (q+a) matrix B
  Vector b_margins;    ///< B_kk - sum_{l!=k} |B_kl|
  Vector c_margins;    ///< C_kk - sum_{l!=k} |C_kl|
  double worst_b = 0.0;
  double worst_c = 0.0;

  /// B row dominant and C strictly row dominant (offset tau_C).
  bool certified(double tau_c = kDominanceTauC) const {
    return (b_margins.size() == 0 || worst_b >= 0.0) && (c_margins.size() == 0 || worst_c >= tau_c);
  }
};

/// Middle factor [[Psi^{-1} - I + W V^T, -W], [-V^T, I]] of the block form.
inline Matrix middle_factor(const VariableSchema& schema, const StructuredParams& sp) {
  const int q = schema.q();
  const int a = sp.aux_dim();
  const Matrix w = build_w(schema, sp.w, a);
  Matrix m(q + a, q + a);
  m.topLeftCorner(q, q) = build_psi_inv_minus_identity(schema, sp.b) + w * sp.v.transpose();
  m.topRightCorner(q, a) = -w;
  m.bottomLeftCorner(a, q) = -sp.v.transpose();
  m.bottomRightCorner(a, a) = Matrix::Identity(a, a);
  return m;
}

/// B = M C with M the middle factor; the blockwise expression
/// [[(P + WV^T) C_RR - W C_AR, (P + WV^T) C_RA - W C_AA], [C_AR - V^T C_RR, C_AA - V^T C_RA]]
/// is exactly this product.
inline DominanceReport assemble_b(const VariableSchema& schema, const StructuredParams& sp) {
  sp.validate(schema);
  DominanceReport rep;
  rep.b = middle_factor(schema, sp) * sp.c;
  rep.b_margins = row_margins(rep.b);
  rep.c_margins = row_margins(sp.c);
  rep.worst_b = rep.b_margins.size() ? rep.b_margins.minCoeff() : 0.0;
  rep.worst_c = rep.c_margins.size() ? rep.c_margins.minCoeff() : 0.0;
  return rep;
}

/// How assemble_lambda establishes that all probabilities are nonnegative.
enum class PositivityCheck {
  Certificate,  ///< B/C dominance certificate (sufficient, often infeasible)
  Enumeration,  ///< evaluate every allowed state (structural zeros cover the rest)
  None,
};

inline GrassmannParams assemble_lambda(const VariableSchema& schema, const StructuredParams& sp,
                                       PositivityCheck check) {
  sp.validate(schema);
  Matrix lam = lambda_minus_identity(schema, sp);
  lam.diagonal().array() += 1.0;
  if (check == PositivityCheck::Certificate) {
    const auto rep = assemble_b(schema, sp);
    if (!rep.certified()) {
      throw PositivityError("dominance certificate failed: worst B margin " + std::to_string(rep.worst_b) +
                            ", worst C margin " + std::to_string(rep.worst_c));
    }
  }
  auto params = GrassmannParams::from_lambda(std::move(lam));
  if (check == PositivityCheck::Enumeration) {
    for (StateMask m : enumerate_allowed_masks(schema)) {
      const double pr = joint_probability(params, m);
      if (pr < 0.0) {
        throw PositivityError("allowed state " + std::to_string(m) + " has negative probability " + std::to_string(pr));
      }
    }
  }
  return params;
}

/// Full (q+a) x (q+a) Lambda - I including the auxiliary dummies.
inline Matrix full_block_lambda_minus_identity(const VariableSchema& schema, const StructuredParams& sp) {
  const int q = schema.q();
  const int a = sp.aux_dim();
  Matrix d = Matrix::Identity(q + a, q + a);
  for (int k = 0; k < a; ++k) d(q + k, q + k) = std::sqrt(1.0 / sp.omega(k) - 1.0);
  return d * middle_factor(schema, sp) * d;
}

/// exp(y^T b) / (1 + sum_l exp(b_l)).
inline double categorical_pmf(const Vector& b, std::span<const std::uint8_t> y) {
  if (static_cast<Eigen::Index>(y.size()) != b.size()) throw RangeError("categorical block length mismatch");
  double num = 0.0;
  double den = 1.0;
  for (Eigen::Index l = 0; l < b.size(); ++l) {
    if (y[static_cast<std::size_t>(l)]) num += b(l);
    den += std::exp(b(l));
  }
  return std::exp(num) / den;
}

/// exp(y^T b) / (1 + sum_l prod_{m<=l} exp(b_m)).
inline double ordinal_pmf(const Vector& b, std::span<const std::uint8_t> y) {
  if (static_cast<Eigen::Index>(y.size()) != b.size()) throw RangeError("ordinal block length mismatch");
  double num = 0.0;
  double den = 1.0;
  double cum = 0.0;
  for (Eigen::Index l = 0; l < b.size(); ++l) {
    if (y[static_cast<std::size_t>(l)]) num += b(l);
    cum += b(l);
    den += std::exp(cum);
  }
  return std::exp(num) / den;
}

/// Product of per-variable Cat/Ord pmfs at biases beta (length q).
inline double independent_pmf(const VariableSchema& schema, const Vector& beta, const DummyState& y) {
  double p = 1.0;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& blk = schema.block(j);
    const Vector bj = beta.segment(blk.offset, blk.size);
    const auto yj = std::span<const std::uint8_t>(y.bits).subspan(static_cast<std::size_t>(blk.offset),
                                                                  static_cast<std::size_t>(blk.size));
    p *= schema.variable(j).kind == VariableKind::Categorical ? categorical_pmf(bj, yj) : ordinal_pmf(bj, yj);
  }
  return p;
}

}  // namespace grasscat

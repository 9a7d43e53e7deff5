#pragma once

// Random parameter generators shared by the unit and acceptance suites.

#include <random>

#include "grasscat/grassmann.hpp"
#include "grasscat/schema.hpp"
#include "grasscat/structured.hpp"

namespace grasscat::testkit {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline double gaussian(Rng& rng, double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng); }

inline Matrix gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gaussian(rng, sd);
  }
  return m;
}

inline Vector gaussian_vector(Rng& rng, Eigen::Index n, double sd = 1.0) {
  return gaussian_matrix(rng, n, 1, sd).col(0);
}

/// Random strictly row dominant matrix with positive diagonal.
inline Matrix random_dominant(Rng& rng, int n, double slack = 0.2) {
  Matrix m = gaussian_matrix(rng, n, n);
  for (int k = 0; k < n; ++k) {
    m(k, k) = 0.0;
    m(k, k) = m.row(k).cwiseAbs().sum() + uniform(rng, slack, 1.0 + slack);
  }
  return m;
}

/// Lambda = I + B C^{-1}, B and C strictly dominant: Lambda - I is a P-matrix,
/// so every state has strictly positive probability.
inline GrassmannParams random_valid_params(Rng& rng, int q) {
  const Matrix b = random_dominant(rng, q);
  const Matrix c = random_dominant(rng, q);
  Matrix lam = b * c.inverse();
  lam.diagonal().array() += 1.0;
  return GrassmannParams::from_lambda(lam);
}

inline StructuredParams random_structured(Rng& rng, const VariableSchema& schema, int a, double coupling = 0.5) {
  auto sp = StructuredParams::independent(schema, a);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    sp.b[j] = gaussian_vector(rng, schema.block(j).size, 0.8);
    sp.w[j] = gaussian_vector(rng, a, coupling);
  }
  sp.v = gaussian_matrix(rng, schema.q(), a, coupling);
  for (int k = 0; k < a; ++k) sp.omega(k) = uniform(rng, 0.1, 0.9);
  return sp;
}

/// Random structured parameters whose allowed states all have nonnegative
/// probability (checked by enumeration).
inline StructuredParams random_positive_structured(Rng& rng, const VariableSchema& schema, int a,
                                                   double coupling = 0.5) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    auto sp = random_structured(rng, schema, a, coupling);
    try {
      (void)assemble_lambda(schema, sp, PositivityCheck::Enumeration);
      return sp;
    } catch (const NumericalError&) {
    }
  }
  throw std::runtime_error("random_positive_structured: no positive draw");
}

/// Random certificate-passing parameters for a binary-only schema. Auxiliary
/// rows of B are repaired by raising the diagonal of C_AA (only B's diagonal
/// moves); dummy rows by raising their bias, since row k of B tends to
/// exp(b_k) C_k as b_k grows.
inline StructuredParams random_certified_binary(Rng& rng, const VariableSchema& schema, int a) {
  if (!schema.binary_only()) throw std::invalid_argument("certificate generator needs a binary-only schema");
  const int q = schema.q();
  for (int attempt = 0; attempt < 1000; ++attempt) {
    auto sp = random_structured(rng, schema, a, 0.3);
    sp.c = random_dominant(rng, q + a, 0.5) * 0.5;
    for (int k = 0; k < q; ++k) sp.b[static_cast<std::size_t>(k)](0) = uniform(rng, -2.0, 3.0);
    for (int round = 0; round < 200; ++round) {
      const auto rep = assemble_b(schema, sp);
      if (rep.certified()) return sp;
      for (int k = 0; k < a; ++k) {
        if (rep.b_margins(q + k) < 0.0) sp.c(q + k, q + k) += -rep.b_margins(q + k) + uniform(rng, 0.05, 0.5);
      }
      for (int k = 0; k < q; ++k) {
        if (rep.b_margins(k) < 0.0) sp.b[static_cast<std::size_t>(k)](0) += 0.25;
      }
    }
  }
  throw std::runtime_error("random_certified_binary: no certified draw");
}

inline VariableSchema schema_of(std::initializer_list<std::pair<VariableKind, int>> spec) {
  std::vector<VariableDecl> vars;
  int i = 0;
  for (const auto& [kind, levels] : spec) vars.push_back({"v" + std::to_string(i++), kind, levels});
  return VariableSchema(std::move(vars));
}

inline VariableSchema reader_schema() {
  return VariableSchema({{"Working", VariableKind::Categorical, 2},
                         {"Age", VariableKind::Categorical, 3},
                         {"Education", VariableKind::Ordinal, 4}});
}

/// The rounded Lambda - I reported for the reader data fit.
inline Matrix reader_lambda_minus_identity() {
  Matrix m(6, 6);
  m << 0.62, 0.12, -0.14, -2.12, -0.63, -0.14,  //
      -1.76, 1.73, 2.57, -3.29, -4.49, -1.84,   //
      -1.76, 1.73, 2.57, -3.29, -4.49, -1.84,   //
      0.83, -0.36, -0.98, 2.36, 2.05, 0.78,     //
      0.00, 0.00, 0.00, -1.00, 0.00, 0.00,      //
      0.00, 0.00, 0.00, 0.00, -1.00, 0.00;
  return m;
}

inline GrassmannParams reader_params() {
  Matrix lam = reader_lambda_minus_identity();
  lam.diagonal().array() += 1.0;
  return GrassmannParams::from_lambda(lam);
}

}  // namespace grasscat::testkit

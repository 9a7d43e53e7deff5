#pragma once

// Latent-factor model for categorical/ordinal dummies with an optional
// continuous block:
//   p(x, y | z) = N(x | mu_x + W (z - mu_z), Psi) prod Cat/Ord(y | b + G (z - mu_z))
//   p(x, y)     = pi_y N(x | mu_x + W Sigma_z G^T y, Psi + W Sigma_z W^T)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "grasscat/errors.hpp"
#include "grasscat/lbfgs.hpp"
#include "grasscat/linalg.hpp"
#include "grasscat/mle.hpp"
#include "grasscat/schema.hpp"
#include "grasscat/structured.hpp"

namespace grasscat {

struct FactorModel {
  Vector mu_x;      ///< p_x
  Vector psi;       ///< diagonal of the noise covariance, p_x
  Matrix w_load;    ///< p_x x p_z
  Vector b;         ///< q
  Matrix g;         ///< q x p_z
  Vector mu_z;      ///< p_z
  Matrix sigma_z;   ///< p_z x p_z

  int p_x() const { return static_cast<int>(mu_x.size()); }
  int p_z() const { return static_cast<int>(g.cols()); }
  int q() const { return static_cast<int>(b.size()); }

  /// Canonical model without continuous variables.
  static FactorModel discrete(Vector b, Matrix g) {
    FactorModel m;
    const auto pz = g.cols();
    m.mu_x = Vector(0);
    m.psi = Vector(0);
    m.w_load = Matrix(0, pz);
    m.b = std::move(b);
    m.g = std::move(g);
    m.mu_z = Vector::Zero(pz);
    m.sigma_z = Matrix::Identity(pz, pz);
    return m;
  }

  bool is_canonical(double tol = 0.0) const {
    return (mu_z.size() == 0 || mu_z.cwiseAbs().maxCoeff() <= tol) &&
           max_abs(sigma_z - Matrix::Identity(p_z(), p_z())) <= tol;
  }

  void validate(const VariableSchema& schema) const {
    if (b.size() != schema.q() || g.rows() != schema.q()) {
      throw SchemaError("factor model has q=" + std::to_string(b.size()) + ", schema has q=" + std::to_string(schema.q()));
    }
    const auto pz = g.cols();
    if (mu_z.size() != pz || sigma_z.rows() != pz || sigma_z.cols() != pz) throw SchemaError("latent shapes disagree");
    if (psi.size() != mu_x.size() || w_load.rows() != mu_x.size() || w_load.cols() != pz) {
      throw SchemaError("continuous-block shapes disagree");
    }
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
      if (!(psi(i) > 0.0)) throw ParameterError("noise variance psi[" + std::to_string(i) + "] must be > 0");
    }
    if (pz > 0) {
      if (max_abs(sigma_z - sigma_z.transpose()) > 1e-12 * std::max(1.0, max_abs(sigma_z))) {
        throw ParameterError("Sigma_z is not symmetric");
      }
      Eigen::LLT<Matrix> llt(sigma_z);
      if (llt.info() != Eigen::Success) throw ParameterError("Sigma_z is not positive definite");
    }
    if (!b.allFinite() || !g.allFinite() || !mu_x.allFinite() || !w_load.allFinite()) {
      throw ParameterError("factor model has non-finite entries");
    }
  }
};

inline Vector state_vector(StateMask m, int q) {
  Vector y = Vector::Zero(q);
  for (int r = 0; r < q; ++r) {
    if ((m >> r) & 1U) y(r) = 1.0;
  }
  return y;
}

/// Prior mixture weights over the allowed states.
struct MixtureWeights {
  std::vector<StateMask> states;  ///< enumeration order
  std::vector<double> weights;
  std::vector<double> log_weights;
  std::unordered_map<StateMask, std::size_t> index;

  /// 0 for a disallowed state.
  double weight_of(StateMask m) const {
    const auto it = index.find(m);
    return it == index.end() ? 0.0 : weights[it->second];
  }
  double log_weight_of(StateMask m) const {
    const auto it = index.find(m);
    return it == index.end() ? -std::numeric_limits<double>::infinity() : log_weights[it->second];
  }
};

inline double log_sum_exp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// pi_y proportional to exp(y^T b + 1/2 y^T G Sigma_z G^T y), allowed y only.
inline MixtureWeights mixture_weights(const VariableSchema& schema, const Vector& b, const Matrix& g,
                                      const Matrix& sigma_z) {
  if (b.size() != schema.q() || g.rows() != schema.q()) throw SchemaError("b/G do not match the schema");
  MixtureWeights mw;
  mw.states = enumerate_allowed_masks(schema, EnumerationCaps::from_env().allowed_states);
  const Matrix quad = g * sigma_z * g.transpose();
  std::vector<double> score;
  score.reserve(mw.states.size());
  for (StateMask m : mw.states) {
    const Vector y = state_vector(m, schema.q());
    score.push_back(y.dot(b) + 0.5 * y.dot(quad * y));
  }
  const double lz = log_sum_exp(score);
  for (std::size_t i = 0; i < mw.states.size(); ++i) {
    mw.log_weights.push_back(score[i] - lz);
    mw.weights.push_back(std::exp(score[i] - lz));
    mw.index.emplace(mw.states[i], i);
  }
  return mw;
}

inline MixtureWeights mixture_weights(const VariableSchema& schema, const FactorModel& m) {
  return mixture_weights(schema, m.b, m.g, m.sigma_z);
}

inline double log_normal_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const auto d = x.size();
  if (d == 0) return 0.0;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw ParameterError("covariance is not positive definite");
  const Vector z = llt.matrixL().solve(x - mean);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (z.squaredNorm() + logdet + static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
}

/// Psi + W Sigma_z W^T.
inline Matrix marginal_x_covariance(const FactorModel& m) {
  Matrix s = m.w_load * m.sigma_z * m.w_load.transpose();
  s.diagonal() += m.psi;
  return s;
}

struct ObservedDensity {
  double density = 0.0;
  bool structural_zero = false;
};

inline ObservedDensity observed_density(const FactorModel& m, const VariableSchema& schema, const Vector& x,
                                        StateMask y, const MixtureWeights& mw) {
  if (x.size() != m.p_x()) throw RangeError("x has length " + std::to_string(x.size()) + ", expected " + std::to_string(m.p_x()));
  const double pi = mw.weight_of(y);
  if (pi == 0.0 && !is_allowed_mask(schema, y)) return {0.0, true};
  if (m.p_x() == 0) return {pi, false};
  const Vector mean = m.mu_x + m.w_load * m.sigma_z * m.g.transpose() * state_vector(y, m.q());
  return {pi * std::exp(log_normal_pdf(x, mean, marginal_x_covariance(m))), false};
}

inline ObservedDensity observed_density(const FactorModel& m, const VariableSchema& schema, const Vector& x,
                                        StateMask y) {
  return observed_density(m, schema, x, y, mixture_weights(schema, m));
}

/// Mixture-of-normals density of z (prior).
inline double prior_density(const FactorModel& m, const VariableSchema& schema, const Vector& z,
                            const MixtureWeights& mw) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mw.states.size(); ++i) {
    const Vector mean = m.mu_z + m.sigma_z * m.g.transpose() * state_vector(mw.states[i], schema.q());
    acc += mw.weights[i] * std::exp(log_normal_pdf(z, mean, m.sigma_z));
  }
  return acc;
}

/// p(x, y | z): independent normal and Cat/Ord factors.
inline double conditional_density(const FactorModel& m, const VariableSchema& schema, const Vector& x, StateMask y,
                                  const Vector& z) {
  if (!is_allowed_mask(schema, y)) return 0.0;
  const Vector dz = z - m.mu_z;
  const Vector beta = m.b + m.g * dz;
  double p = independent_pmf(schema, beta, DummyState::from_mask(y, schema.q()));
  if (m.p_x() > 0) p *= std::exp(log_normal_pdf(x, m.mu_x + m.w_load * dz, Matrix(m.psi.asDiagonal())));
  return p;
}

struct Posterior {
  Vector m;
  Matrix cov;
};

/// N(z | m, Sigma_{z|x}); m is the factor score.
inline Posterior posterior(const FactorModel& model, const Vector& x, const Vector& y) {
  if (y.size() != model.q()) throw RangeError("y has the wrong length");
  if (x.size() != model.p_x()) throw RangeError("x has the wrong length");
  const Matrix prec_z = checked_inverse(model.sigma_z, "Sigma_z");
  Posterior out;
  if (model.p_x() == 0) {
    out.cov = model.sigma_z;
    out.m = model.mu_z + model.sigma_z * model.g.transpose() * y;
    return out;
  }
  const Vector psi_inv = model.psi.cwiseInverse();
  const Matrix wtpi = model.w_load.transpose() * psi_inv.asDiagonal();
  out.cov = checked_inverse(prec_z + wtpi * model.w_load, "posterior precision");
  out.m = model.mu_z + out.cov * (wtpi * (x - model.mu_x) + model.g.transpose() * y);
  return out;
}

inline Posterior posterior(const FactorModel& model, const Vector& x, StateMask y) {
  return posterior(model, x, state_vector(y, model.q()));
}

/// mu_z = 0 and Sigma_z = I by z' = L^{-1}(z - mu_z), Sigma_z = L L^T.
inline FactorModel canonicalize(const FactorModel& m) {
  FactorModel out = m;
  if (m.p_z() == 0) return out;
  Eigen::LLT<Matrix> llt(m.sigma_z);
  if (llt.info() != Eigen::Success) throw ParameterError("Sigma_z is not positive definite");
  const Matrix l = llt.matrixL();
  out.g = m.g * l;
  out.w_load = m.w_load * l;
  out.mu_z = Vector::Zero(m.p_z());
  out.sigma_z = Matrix::Identity(m.p_z(), m.p_z());
  return out;
}

// ---------------------------------------------------------------------------
// Combined loading vectors.

struct CombinedLoadings {
  struct Entry {
    std::size_t variable = 0;
    int level = 0;
    Vector g;
  };
  std::vector<Entry> entries;  ///< per variable, levels 0..levels-1
  Matrix coefficients;         ///< entries x q; entry vectors are rows of coefficients * G
};

/// Rows of A with combined vectors = A G. The block vector g_{C_j} / g_{O_j}
/// is the sum of G's rows in the block.
inline Matrix combined_loading_coefficients(const VariableSchema& schema) {
  int n = 0;
  for (const auto& v : schema.variables()) n += v.levels;
  Matrix a = Matrix::Zero(n, schema.q());
  int row = 0;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& blk = schema.block(j);
    const bool cat = schema.variable(j).kind == VariableKind::Categorical;
    const double base = cat ? -1.0 / (blk.size + 1) : -0.5;
    for (int l = 0; l <= blk.size; ++l, ++row) {
      a.block(row, blk.offset, 1, blk.size).setConstant(base);
      if (l == 0) continue;
      if (cat) {
        a(row, blk.offset + l - 1) += 1.0;
      } else {
        for (int m = 0; m < l; ++m) a(row, blk.offset + m) += 1.0;
      }
    }
  }
  return a;
}

inline CombinedLoadings combined_loadings(const VariableSchema& schema, const Matrix& g) {
  if (g.rows() != schema.q()) {
    throw SchemaError("G has " + std::to_string(g.rows()) + " rows, schema has q=" + std::to_string(schema.q()));
  }
  CombinedLoadings out;
  out.coefficients = combined_loading_coefficients(schema);
  const Matrix c = out.coefficients * g;
  int row = 0;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    for (int l = 0; l < schema.variable(j).levels; ++l, ++row) out.entries.push_back({j, l, c.row(row).transpose()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rotation fixing.

struct RotationResult {
  FactorModel model;
  Matrix rotation;      ///< p_z x p_z orthogonal Q
  Vector eigenvalues;   ///< of G^T G, descending
  Vector ratios;        ///< eigenvalue / trace
};

/// Q from the eigendecomposition of G^T G; G <- G Q, W <- W Q, mu_z <- Q^T mu_z,
/// Sigma_z <- Q^T Sigma_z Q. Eigenvectors: descending order, first nonzero
/// component positive; degenerate eigenspaces get the projections of the
/// original axes, orthonormalised in axis order.
inline RotationResult fix_rotation(const FactorModel& m, double degenerate_tol = 1e-10) {
  const int pz = m.p_z();
  if (pz < 1) throw RangeError("rotation fixing needs p_z >= 1");
  const Matrix gtg = m.g.transpose() * m.g;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gtg);
  Vector ev = es.eigenvalues().reverse();
  Matrix vecs = es.eigenvectors().rowwise().reverse();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (int start = 0; start < pz;) {
    int end = start + 1;
    while (end < pz && std::abs(ev(start) - ev(end)) <= degenerate_tol * scale) ++end;
    if (end - start > 1) {
      const Matrix basis = vecs.middleCols(start, end - start);
      const Matrix proj = basis * basis.transpose();
      int filled = 0;
      for (int axis = 0; axis < pz && filled < end - start; ++axis) {
        Vector v = proj.col(axis);
        for (int k = 0; k < filled; ++k) v -= vecs.col(start + k).dot(v) * vecs.col(start + k);
        const double nv = v.norm();
        if (nv > 1e-8) vecs.col(start + filled++) = v / nv;
      }
      const double mean = ev.segment(start, end - start).mean();
      ev.segment(start, end - start).setConstant(mean);
    }
    start = end;
  }
  for (int k = 0; k < pz; ++k) {
    for (int i = 0; i < pz; ++i) {
      if (std::abs(vecs(i, k)) > 1e-12) {
        if (vecs(i, k) < 0.0) vecs.col(k) *= -1.0;
        break;
      }
    }
  }
  RotationResult out;
  out.rotation = vecs;
  out.model = m;
  out.model.g = m.g * vecs;
  out.model.w_load = m.w_load * vecs;
  if (!m.is_canonical()) {
    out.model.mu_z = vecs.transpose() * m.mu_z;
    out.model.sigma_z = vecs.transpose() * m.sigma_z * vecs;
  }
  out.eigenvalues = ev.cwiseMax(0.0);
  const double tr = out.eigenvalues.sum();
  out.ratios = tr > 0.0 ? Vector(out.eigenvalues / tr) : Vector(Vector::Zero(pz));
  return out;
}

// ---------------------------------------------------------------------------
// BIC.

/// q + q p_z - p_z (p_z - 1) / 2, plus mu_x, Psi and W for a continuous block.
inline std::int64_t bic_parameter_count(int q, int p_z, int p_x = 0) {
  const std::int64_t k = static_cast<std::int64_t>(q) + static_cast<std::int64_t>(q) * p_z -
                         static_cast<std::int64_t>(p_z) * (p_z - 1) / 2;
  return k + 2 * static_cast<std::int64_t>(p_x) + static_cast<std::int64_t>(p_x) * p_z;
}

inline double bic_value(std::int64_t k, std::int64_t n, double log_likelihood) {
  return static_cast<double>(k) * std::log(static_cast<double>(n)) - 2.0 * log_likelihood;
}

// ---------------------------------------------------------------------------
// Fitting.

struct FactorData {
  std::vector<Record> rows;
  Matrix x;  ///< rows.size() x p_x (p_x may be 0)

  std::size_t n() const { return rows.size(); }
  int p_x() const { return static_cast<int>(x.cols()); }
};

struct FactorFitConfig {
  int p_z = 2;
  int restarts = 3;
  int max_iter = 3000;
  double grad_tol = 1e-6;
  std::uint64_t seed = 1;
  std::vector<double> norm_penalty_schedule{1.0, 1e2, 1e4, 1e6};
  double init_sd = 0.1;

  void validate() const {
    if (p_z < 0) throw RangeError("latent dimension must be >= 0");
    if (restarts < 1) throw RangeError("restarts must be >= 1");
    if (max_iter < 1) throw RangeError("max_iter must be >= 1");
    if (!(grad_tol > 0.0)) throw RangeError("grad_tol must be > 0");
    if (norm_penalty_schedule.empty()) throw RangeError("norm penalty schedule is empty");
  }
};

struct FactorFitReport {
  FactorModel model;  ///< canonical and rotation-fixed
  double log_likelihood = 0.0;
  double nll = 0.0;
  std::int64_t n = 0;
  int iterations = 0;
  bool converged = false;
  std::string status;
  Vector ratios;
  double common_norm = 0.0;   ///< the free target norm s
  double norm_spread = 0.0;   ///< max - min combined-loading norm
  std::int64_t parameter_count = 0;
  double bic = 0.0;
  std::vector<double> restart_nll;
  std::vector<std::vector<double>> stage_history;
  Vector mean;            ///< model dummy means E[y]
  Vector empirical_mean;
};

namespace detail {

struct FactorLayout {
  int q, pz, px;
  int g_off() const { return q; }
  int s_off() const { return q + q * pz; }
  int mu_off() const { return s_off() + (pz > 0 ? 1 : 0); }
  int rho_off() const { return mu_off() + px; }
  int w_off() const { return rho_off() + px; }
  int size() const { return w_off() + px * pz; }
};

struct FactorProblem {
  const VariableSchema* schema;
  FactorLayout L;
  Matrix y_allowed;       ///< states x q
  Matrix y_rows;          ///< n x q
  Matrix x;               ///< n x p_x
  Vector y_mean;          ///< empirical
  Matrix y_second;        ///< empirical E[y y^T]
  Matrix comb;            ///< combined-loading coefficients
  double n;

  FactorModel unpack(const Vector& th) const {
    FactorModel m;
    m.b = th.head(L.q);
    m.g = th.segment(L.g_off(), L.q * L.pz).reshaped(L.q, L.pz);
    m.mu_x = th.segment(L.mu_off(), L.px);
    m.psi = th.segment(L.rho_off(), L.px).array().exp();
    m.w_load = th.segment(L.w_off(), L.px * L.pz).reshaped(L.px, L.pz);
    m.mu_z = Vector::Zero(L.pz);
    m.sigma_z = Matrix::Identity(L.pz, L.pz);
    return m;
  }

  /// Per-observation NLL (+ lambda * norm penalty); gradient when requested.
  double evaluate(const Vector& th, double lambda, Vector* grad, double* nll_out = nullptr) const {
    const FactorModel m = unpack(th);
    if (grad) grad->setZero(L.size());
    // discrete part
    const Matrix yg = y_allowed * m.g;
    std::vector<double> score(static_cast<std::size_t>(y_allowed.rows()));
    for (Eigen::Index k = 0; k < y_allowed.rows(); ++k) {
      score[static_cast<std::size_t>(k)] = y_allowed.row(k).dot(m.b) + 0.5 * yg.row(k).squaredNorm();
    }
    const double lz = log_sum_exp(score);
    double nll = lz - y_mean.dot(m.b) - 0.5 * (m.g.transpose() * y_second * m.g).trace();
    if (grad) {
      Vector pi(y_allowed.rows());
      for (Eigen::Index k = 0; k < pi.size(); ++k) pi(k) = std::exp(score[static_cast<std::size_t>(k)] - lz);
      const Vector ey = y_allowed.transpose() * pi;
      const Matrix eyy = y_allowed.transpose() * pi.asDiagonal() * y_allowed;
      grad->head(L.q) = ey - y_mean;
      grad->segment(L.g_off(), L.q * L.pz) = ((eyy - y_second) * m.g).reshaped();
    }
    // continuous part
    if (L.px > 0) {
      Matrix s = m.w_load * m.w_load.transpose();
      s.diagonal() += m.psi;
      Eigen::LLT<Matrix> llt(s);
      if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
      const Matrix p = llt.solve(Matrix::Identity(L.px, L.px));
      const Matrix means = (y_rows * m.g * m.w_load.transpose()).rowwise() + m.mu_x.transpose();
      const Matrix r = x - means;  // n x px
      const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      const Matrix rp = r * p;
      nll += 0.5 * (rp.cwiseProduct(r).sum() / n + logdet + L.px * std::log(2.0 * std::numbers::pi));
      if (grad) {
        const Vector rbar = r.colwise().mean().transpose();
        const Matrix rr = r.transpose() * r / n;
        const Matrix gs = 0.5 * (p - p * rr * p);
        const Matrix ry = r.transpose() * y_rows / n;  // px x q
        grad->segment(L.mu_off(), L.px) = -p * rbar;
        for (int i = 0; i < L.px; ++i) (*grad)(L.rho_off() + i) = gs(i, i) * m.psi(i);
        grad->segment(L.w_off(), L.px * L.pz) = (2.0 * gs * m.w_load - p * ry * m.g).reshaped();
        grad->segment(L.g_off(), L.q * L.pz) -= (ry.transpose() * p * m.w_load).reshaped();
      }
    }
    if (nll_out) *nll_out = nll;
    double f = nll;
    if (L.pz > 0) {
      const double s = th(L.s_off());
      const Matrix c = comb * m.g;
      Matrix gc = Matrix::Zero(c.rows(), c.cols());
      double pen = 0.0;
      for (Eigen::Index i = 0; i < c.rows(); ++i) {
        const double nr = c.row(i).norm();
        pen += (nr - s) * (nr - s);
        if (grad) {
          if (nr > 0.0) gc.row(i) = 2.0 * lambda * (nr - s) / nr * c.row(i);
          (*grad)(L.s_off()) -= 2.0 * lambda * (nr - s);
        }
      }
      f += lambda * pen;
      if (grad) grad->segment(L.g_off(), L.q * L.pz) += (comb.transpose() * gc).reshaped();
    }
    return f;
  }
};

}  // namespace detail

/// Per-observation NLL of the factor model on the data (no penalty).
inline double factor_nll(const FactorModel& m, const VariableSchema& schema, const FactorData& data) {
  const auto mw = mixture_weights(schema, m);
  ExactSum acc;
  Matrix sx;
  if (m.p_x() > 0) sx = marginal_x_covariance(m);
  for (std::size_t i = 0; i < data.n(); ++i) {
    const StateMask y = encode_record(schema, data.rows[i]).mask();
    double lp = mw.log_weight_of(y);
    if (m.p_x() > 0) {
      const Vector xi = data.x.row(static_cast<Eigen::Index>(i)).transpose();
      lp += log_normal_pdf(xi, m.mu_x + m.w_load * m.sigma_z * m.g.transpose() * state_vector(y, m.q()), sx);
    }
    acc.add(-lp);
  }
  return acc.value() / static_cast<double>(data.n());
}

/// Model dummy means under the prior mixture.
inline Vector factor_mean(const FactorModel& m, const VariableSchema& schema) {
  const auto mw = mixture_weights(schema, m);
  Vector mu = Vector::Zero(schema.q());
  for (std::size_t i = 0; i < mw.states.size(); ++i) mu += mw.weights[i] * state_vector(mw.states[i], schema.q());
  return mu;
}

inline FactorFitReport fit_factor_model(const VariableSchema& schema, const FactorData& data,
                                        const FactorFitConfig& cfg) {
  cfg.validate();
  if (data.n() == 0) throw IngestError("dataset has no rows");
  if (data.x.rows() != static_cast<Eigen::Index>(data.n())) throw IngestError("continuous block row count mismatch");
  const StateCounts sc = state_counts(schema, data.rows);
  detail::FactorProblem prob;
  prob.schema = &schema;
  prob.L = {schema.q(), cfg.p_z, data.p_x()};
  const auto allowed = enumerate_allowed_masks(schema, EnumerationCaps::from_env().allowed_states);
  prob.y_allowed.resize(static_cast<Eigen::Index>(allowed.size()), schema.q());
  for (std::size_t k = 0; k < allowed.size(); ++k) prob.y_allowed.row(static_cast<Eigen::Index>(k)) = state_vector(allowed[k], schema.q()).transpose();
  prob.y_rows.resize(static_cast<Eigen::Index>(data.n()), schema.q());
  for (std::size_t i = 0; i < data.n(); ++i) {
    prob.y_rows.row(static_cast<Eigen::Index>(i)) = state_vector(encode_record(schema, data.rows[i]).mask(), schema.q()).transpose();
  }
  prob.x = data.x;
  prob.n = static_cast<double>(data.n());
  prob.y_mean = prob.y_rows.colwise().mean().transpose();
  prob.y_second = prob.y_rows.transpose() * prob.y_rows / prob.n;
  prob.comb = combined_loading_coefficients(schema);
  const auto& L = prob.L;

  std::vector<Vector> b0 = detail::empirical_biases(schema, sc, 30.0, nullptr);
  Vector b_init(schema.q());
  for (std::size_t j = 0; j < schema.size(); ++j) b_init.segment(schema.block(j).offset, schema.block(j).size) = b0[j];

  FactorFitReport best;
  bool have_best = false;
  double best_norm = 0.0;
  std::vector<double> restart_nll;
  for (int r = 0; r < cfg.restarts; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(r), 0x66u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss(0.0, cfg.init_sd);
    Vector th = Vector::Zero(L.size());
    th.head(L.q) = b_init;
    for (int i = 0; i < L.q * L.pz; ++i) th(L.g_off() + i) = gauss(rng);
    if (L.px > 0) {
      const Vector mx = data.x.colwise().mean().transpose();
      th.segment(L.mu_off(), L.px) = mx;
      for (int i = 0; i < L.px; ++i) {
        const double var = (data.x.col(i).array() - mx(i)).square().mean();
        th(L.rho_off() + i) = std::log(std::max(0.5 * var, 1e-6));
      }
      for (int i = 0; i < L.px * L.pz; ++i) th(L.w_off() + i) = gauss(rng);
    }
    if (L.pz > 0) {
      const Matrix c = prob.comb * th.segment(L.g_off(), L.q * L.pz).reshaped(L.q, L.pz);
      th(L.s_off()) = c.rowwise().norm().mean();
    }

    FactorFitReport rep;
    LbfgsResult opt;
    for (double lambda : cfg.norm_penalty_schedule) {
      const ObjectiveFn fg = [&](const Vector& x, Vector& g) { return prob.evaluate(x, lambda, &g); };
      LbfgsOptions lo;
      lo.max_iter = cfg.max_iter;
      lo.grad_tol = cfg.grad_tol;
      opt = minimize_lbfgs(fg, th, lo);
      th = opt.x;
      rep.iterations += opt.iterations;
      rep.stage_history.push_back(opt.history);
      if (L.pz == 0) break;
    }
    double nll = 0.0;
    prob.evaluate(th, 0.0, nullptr, &nll);
    rep.model = prob.unpack(th);
    rep.nll = nll;
    rep.status = to_string(opt.status);
    const double gmax = opt.grad.size() ? opt.grad.cwiseAbs().maxCoeff() : 0.0;
    rep.converged = opt.status == LbfgsStatus::GradientConverged ||
                    (opt.status == LbfgsStatus::Stalled && gmax <= 100.0 * cfg.grad_tol);
    rep.common_norm = L.pz > 0 ? th(L.s_off()) : 0.0;
    restart_nll.push_back(nll);
    const double norm = th.norm();
    const double tol = 1e-9 * std::max(1.0, std::abs(best.nll));
    if (!have_best || nll < best.nll - tol || (std::abs(nll - best.nll) <= tol && norm < best_norm)) {
      best = std::move(rep);
      best_norm = norm;
      have_best = true;
    }
  }

  if (best.model.p_z() > 0) {
    const auto rot = fix_rotation(best.model);
    best.model = rot.model;
    best.ratios = rot.ratios;
    const Matrix c = prob.comb * best.model.g;
    const Vector norms = c.rowwise().norm();
    best.norm_spread = norms.maxCoeff() - norms.minCoeff();
  } else {
    best.ratios = Vector(0);
  }
  best.n = static_cast<std::int64_t>(data.n());
  best.log_likelihood = -best.nll * static_cast<double>(data.n());
  best.parameter_count = bic_parameter_count(schema.q(), cfg.p_z, data.p_x());
  best.bic = bic_value(best.parameter_count, best.n, best.log_likelihood);
  best.restart_nll = restart_nll;
  best.mean = factor_mean(best.model, schema);
  best.empirical_mean = prob.y_mean;
  return best;
}

struct BicRow {
  int p_z = 0;
  double log_likelihood = 0.0;
  std::int64_t k = 0;
  double bic = 0.0;
  bool converged = false;
};

struct BicTable {
  std::vector<BicRow> rows;
  int chosen = 0;
  double margin = 0.0;  ///< BIC gap to the runner-up
  std::vector<FactorFitReport> fits;
};

inline BicTable select_dimension_bic(const VariableSchema& schema, const FactorData& data, int p_min, int p_max,
                                     FactorFitConfig cfg) {
  if (p_min < 0 || p_max < p_min) throw RangeError("latent dimension range is empty");
  BicTable t;
  for (int pz = p_min; pz <= p_max; ++pz) {
    cfg.p_z = pz;
    auto fit = fit_factor_model(schema, data, cfg);
    t.rows.push_back({pz, fit.log_likelihood, fit.parameter_count, fit.bic, fit.converged});
    t.fits.push_back(std::move(fit));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.rows.size(); ++i) {
    if (t.rows[i].bic < t.rows[best].bic) best = i;
  }
  t.chosen = t.rows[best].p_z;
  double runner = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (i != best) runner = std::min(runner, t.rows[i].bic);
  }
  t.margin = std::isfinite(runner) ? runner - t.rows[best].bic : 0.0;
  return t;
}

}  // namespace grasscat

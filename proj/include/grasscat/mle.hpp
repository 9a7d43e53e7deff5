#pragma once

// Maximum-likelihood fitting of structured parameters.
//
// Objective: NLL/N + mu * penalty. The penalty is either a squared hinge on
// allowed-state probabilities below tau_p (Enumeration) or on the B/C
// dominance margins (Certificate, binary-only schemas; C is then optimised).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "grasscat/errors.hpp"
#include "grasscat/grassmann.hpp"
#include "grasscat/lbfgs.hpp"
#include "grasscat/linalg.hpp"
#include "grasscat/schema.hpp"
#include "grasscat/structured.hpp"

namespace grasscat {

struct StateCounts {
  std::map<StateMask, std::int64_t> counts;  ///< allowed states only
  std::int64_t n = 0;
};

inline StateCounts state_counts(const VariableSchema& schema, const std::vector<Record>& rows) {
  if (rows.empty()) throw IngestError("dataset has no rows");
  StateCounts sc;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    StateMask m = 0;
    try {
      m = encode_record(schema, rows[i]).mask();
    } catch (const ValidationError& e) {
      throw IngestError("row " + std::to_string(i + 1) + ": " + e.what());
    }
    ++sc.counts[m];
    ++sc.n;
  }
  return sc;
}

/// Empirical dummy means.
inline Vector empirical_mean(int q, const StateCounts& sc) {
  Vector mu = Vector::Zero(q);
  for (const auto& [m, n] : sc.counts) {
    for (int r = 0; r < q; ++r) {
      if ((m >> r) & 1U) mu(r) += static_cast<double>(n);
    }
  }
  return mu / static_cast<double>(sc.n);
}

/// Pearson correlation from a covariance matrix; NaN where a variance is 0.
inline Matrix correlation_from_covariance(const Matrix& cov) {
  const auto q = cov.rows();
  Matrix out(q, q);
  for (Eigen::Index r = 0; r < q; ++r) {
    for (Eigen::Index s = 0; s < q; ++s) {
      const double d = cov(r, r) * cov(s, s);
      out(r, s) = r == s ? 1.0 : (d > 0.0 ? cov(r, s) / std::sqrt(d) : std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

inline Matrix empirical_correlation(int q, const StateCounts& sc) {
  const Vector mu = empirical_mean(q, sc);
  Matrix e = Matrix::Zero(q, q);
  for (const auto& [m, n] : sc.counts) {
    for (int r = 0; r < q; ++r) {
      if (!((m >> r) & 1U)) continue;
      for (int s = 0; s < q; ++s) {
        if ((m >> s) & 1U) e(r, s) += static_cast<double>(n);
      }
    }
  }
  e /= static_cast<double>(sc.n);
  return correlation_from_covariance(e - mu * mu.transpose());
}

/// Pearson matrix of the model; off-diagonal NaN flags a zero variance.
inline Matrix model_correlation(const GrassmannParams& p) { return correlation_from_covariance(moments(p).cov); }

inline bool has_undefined_correlation(const Matrix& corr) { return corr.hasNaN(); }

struct LikelihoodValue {
  double nll = 0.0;
  bool finite = true;          ///< false: some observed state has p <= 0
  StateMask offending = 0;
};

inline constexpr double kInfeasibleNll = std::numeric_limits<double>::max();

namespace detail {

inline double state_probability(const Matrix& lambda, double det, StateMask mask) {
  return principal_minor_minus_identity(lambda, mask) / det;
}

}  // namespace detail

inline LikelihoodValue negative_log_likelihood(const GrassmannParams& p, const StateCounts& sc) {
  LikelihoodValue out;
  const double det = p.det_lambda();
  ExactSum sum;
  for (const auto& [m, n] : sc.counts) {
    const double pr = detail::state_probability(p.lambda(), det, m);
    if (!(pr > 0.0)) return {kInfeasibleNll, false, m};
    sum.add_product(static_cast<double>(n), -std::log(pr));
  }
  out.nll = sum.value();
  return out;
}

inline LikelihoodValue negative_log_likelihood(const VariableSchema& schema, const StructuredParams& sp,
                                               const StateCounts& sc) {
  return negative_log_likelihood(assemble_lambda(schema, sp, PositivityCheck::None), sc);
}

/// Row-by-row accumulation; equal bit for bit to the aggregated version.
inline LikelihoodValue negative_log_likelihood_rows(const VariableSchema& schema, const StructuredParams& sp,
                                                    const std::vector<Record>& rows) {
  const auto p = assemble_lambda(schema, sp, PositivityCheck::None);
  const double det = p.det_lambda();
  ExactSum sum;
  for (const auto& rec : rows) {
    const StateMask m = encode_record(schema, rec).mask();
    const double pr = detail::state_probability(p.lambda(), det, m);
    if (!(pr > 0.0)) return {kInfeasibleNll, false, m};
    sum.add(-std::log(pr));
  }
  return {sum.value(), true, 0};
}

// ---------------------------------------------------------------------------
// Free-parameter packing: [b (q) | w (vars x a) | V (q x a, col-major) | u (a) | C ((q+a)^2, optional)]
// with omega = eps + (1 - 2 eps) sigmoid(u).

struct ParamLayout {
  int q = 0;
  int a = 0;
  int vars = 0;
  bool with_c = false;

  ParamLayout(const VariableSchema& schema, int aux, bool c) : q(schema.q()), a(aux), vars(static_cast<int>(schema.size())), with_c(c) {}

  int w_off() const { return q; }
  int v_off() const { return q + vars * a; }
  int u_off() const { return v_off() + q * a; }
  int c_off() const { return u_off() + a; }
  int size() const { return c_off() + (with_c ? (q + a) * (q + a) : 0); }
};

inline double omega_from_free(double u) { return kOmegaEpsilon + (1.0 - 2.0 * kOmegaEpsilon) / (1.0 + std::exp(-u)); }

inline double free_from_omega(double omega) {
  const double s = (omega - kOmegaEpsilon) / (1.0 - 2.0 * kOmegaEpsilon);
  return std::log(s / (1.0 - s));
}

inline Vector pack(const VariableSchema& schema, const StructuredParams& sp, bool with_c) {
  const ParamLayout L(schema, sp.aux_dim(), with_c);
  Vector th(L.size());
  for (std::size_t j = 0; j < schema.size(); ++j) th.segment(schema.block(j).offset, schema.block(j).size) = sp.b[j];
  for (std::size_t j = 0; j < schema.size(); ++j) th.segment(L.w_off() + static_cast<int>(j) * L.a, L.a) = sp.w[j];
  th.segment(L.v_off(), L.q * L.a) = sp.v.reshaped();
  for (int k = 0; k < L.a; ++k) th(L.u_off() + k) = free_from_omega(sp.omega(k));
  if (with_c) th.segment(L.c_off(), (L.q + L.a) * (L.q + L.a)) = sp.c.reshaped();
  return th;
}

/// Inverse of pack; C is kept from `base` when the layout has none.
inline StructuredParams unpack(const VariableSchema& schema, const ParamLayout& L, const Vector& th,
                               const StructuredParams& base) {
  StructuredParams sp = base;
  for (std::size_t j = 0; j < schema.size(); ++j) sp.b[j] = th.segment(schema.block(j).offset, schema.block(j).size);
  for (std::size_t j = 0; j < schema.size(); ++j) sp.w[j] = th.segment(L.w_off() + static_cast<int>(j) * L.a, L.a);
  sp.v = th.segment(L.v_off(), L.q * L.a).reshaped(L.q, L.a);
  sp.omega.resize(L.a);
  for (int k = 0; k < L.a; ++k) sp.omega(k) = omega_from_free(th(L.u_off() + k));
  if (L.with_c) sp.c = th.segment(L.c_off(), (L.q + L.a) * (L.q + L.a)).reshaped(L.q + L.a, L.q + L.a);
  return sp;
}

namespace detail {

/// d/db given the gradient with respect to Psi^{-1} - I.
inline void chain_psi(const VariableSchema& schema, const StructuredParams& sp, const Matrix& gp, Vector& out) {
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& blk = schema.block(j);
    if (schema.variable(j).kind == VariableKind::Categorical) {
      for (int l = 0; l < blk.size; ++l) {
        out(blk.offset + l) += std::exp(sp.b[j](l)) * gp.block(blk.offset, blk.offset + l, blk.size, 1).sum();
      }
    } else {
      double cum = 0.0;
      Vector term(blk.size);
      for (int m = 0; m < blk.size; ++m) {
        cum += sp.b[j](m);
        term(m) = std::exp(cum) * gp(blk.offset, blk.offset + m);
      }
      double tail = 0.0;
      for (int l = blk.size; l-- > 0;) {
        tail += term(l);
        out(blk.offset + l) += tail;
      }
    }
  }
}

/// d/dw given the gradient with respect to the q x a matrix W.
inline void chain_w(const VariableSchema& schema, const ParamLayout& L, const Matrix& gw, Vector& out) {
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& blk = schema.block(j);
    const int rows = schema.variable(j).kind == VariableKind::Categorical ? blk.size : 1;
    for (int k = 0; k < rows; ++k) out.segment(L.w_off() + static_cast<int>(j) * L.a, L.a) += gw.row(blk.offset + k).transpose();
  }
}

/// Packed gradient of a function of Lambda - I, given G = d f / d(Lambda - I).
inline void chain_lambda(const VariableSchema& schema, const StructuredParams& sp, const ParamLayout& L,
                         const Vector& th, const Matrix& gk, Vector& out) {
  chain_psi(schema, sp, gk, out);
  if (L.a == 0) return;
  const Matrix w = build_w(schema, sp.w, L.a);
  const auto om = sp.omega.asDiagonal();
  chain_w(schema, L, gk * sp.v * om, out);
  out.segment(L.v_off(), L.q * L.a) += (gk.transpose() * w * om).reshaped();
  const Matrix wgv = w.transpose() * gk * sp.v;
  for (int k = 0; k < L.a; ++k) {
    const double s = 1.0 / (1.0 + std::exp(-th(L.u_off() + k)));
    out(L.u_off() + k) += wgv(k, k) * (1.0 - 2.0 * kOmegaEpsilon) * s * (1.0 - s);
  }
}

/// Gradient of the margin m_k = X_kk - sum_{l != k} |X_kl| with respect to row k.
inline void add_margin_gradient(const Matrix& x, Eigen::Index k, double coeff, Matrix& g) {
  for (Eigen::Index l = 0; l < x.cols(); ++l) {
    g(k, l) += l == k ? coeff : -coeff * (x(k, l) > 0.0 ? 1.0 : (x(k, l) < 0.0 ? -1.0 : 0.0));
  }
}

}  // namespace detail

struct GradientResult {
  Vector grad;            ///< over [b | w | V | u]
  bool unstable = false;  ///< an observed minor was nearly singular
};

/// Analytic gradient of the (total) NLL via d log det M = tr(M^{-1} dM).
inline GradientResult nll_gradient(const VariableSchema& schema, const StructuredParams& sp, const StateCounts& sc) {
  const auto p = assemble_lambda(schema, sp, PositivityCheck::None);
  const ParamLayout L(schema, sp.aux_dim(), false);
  const Vector th = pack(schema, sp, false);
  GradientResult res;
  Matrix gk = static_cast<double>(sc.n) * p.sigma().transpose();
  for (const auto& [m, n] : sc.counts) {
    const IndexList idx = mask_to_indices(m);
    if (idx.empty()) continue;
    Matrix a = p.lambda()(idx, idx);
    a.diagonal().array() -= 1.0;
    Eigen::PartialPivLU<Matrix> lu(a);
    if (!(lu.rcond() > 1e-12)) res.unstable = true;
    gk(idx, idx) -= static_cast<double>(n) * lu.inverse().transpose();
  }
  res.grad = Vector::Zero(L.size());
  detail::chain_lambda(schema, sp, L, th, gk, res.grad);
  return res;
}

// ---------------------------------------------------------------------------

enum class PositivityMode { Enumeration, Certificate };

inline const char* to_string(PositivityMode m) { return m == PositivityMode::Certificate ? "certificate" : "enumeration"; }

struct FitConfig {
  int a = 2;
  int restarts = 3;
  int max_iter = 2000;
  double grad_tol = 1e-6;  ///< on the per-observation NLL gradient
  std::uint64_t seed = 1;
  PositivityMode positivity = PositivityMode::Enumeration;
  std::vector<double> penalty_schedule{1e2, 1e4, 1e6, 1e8};
  double init_sd = 0.1;
  double tau_p = 1e-9;
  double b_cap = 30.0;

  void validate() const {
    if (a < 0) throw RangeError("latent auxiliary dimension must be >= 0");
    if (restarts < 1) throw RangeError("restarts must be >= 1");
    if (max_iter < 1) throw RangeError("max_iter must be >= 1");
    if (!(grad_tol > 0.0)) throw RangeError("grad_tol must be > 0");
    if (penalty_schedule.empty()) throw RangeError("penalty schedule is empty");
    for (double mu : penalty_schedule) {
      if (!(mu > 0.0)) throw RangeError("penalty weights must be > 0");
    }
  }
};

struct FitReport {
  int a = 0;
  double nll = 0.0;
  double penalized_objective = 0.0;  ///< per observation
  std::int64_t n = 0;
  int iterations = 0;
  bool converged = false;
  bool feasible = false;
  std::string status;
  PositivityMode positivity = PositivityMode::Enumeration;
  double worst_b_margin = 0.0;
  double worst_c_margin = 0.0;
  bool certified = false;
  double min_allowed_probability = 0.0;
  double penalty_weight = 0.0;
  double gradient_norm = 0.0;
  int restart_used = 0;
  std::vector<double> restart_nll;
  std::vector<std::string> warnings;
  StructuredParams params;
  Vector mean;
  Vector empirical_mean;
  Matrix correlation;
  Matrix empirical_correlation;
  std::vector<std::vector<double>> stage_history;  ///< accepted objectives per penalty stage
};

namespace detail {

struct Evaluation {
  double objective = 0.0;
  double nll = 0.0;
  double penalty = 0.0;
};

/// Penalised per-observation objective and its gradient. Returns +inf when
/// Lambda is singular or an observed state has p <= 0.
inline double penalized_objective(const VariableSchema& schema, const ParamLayout& L, const StructuredParams& base,
                                  const StateCounts& sc, const std::vector<StateMask>& allowed, PositivityMode mode,
                                  double mu, double tau_p, const Vector& th, Vector* grad, Evaluation* ev = nullptr) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const StructuredParams sp = unpack(schema, L, th, base);
  Matrix lam = lambda_minus_identity(schema, sp);
  lam.diagonal().array() += 1.0;
  if (!lam.allFinite()) return inf;
  Eigen::PartialPivLU<Matrix> lu(lam);
  const double det = lu.determinant();
  if (!(det > 0.0) || !(lu.rcond() > 1e-14)) return inf;
  const Matrix sigma = lu.inverse();
  const double n_total = static_cast<double>(sc.n);

  Matrix gk;
  if (grad) gk = sigma.transpose();  // N * Sigma^T / N
  ExactSum nll;
  for (const auto& [m, n] : sc.counts) {
    const IndexList idx = mask_to_indices(m);
    if (idx.empty()) {
      if (!(det > 0.0)) return inf;
      nll.add_product(static_cast<double>(n), std::log(det));
      continue;
    }
    Matrix a = lam(idx, idx);
    a.diagonal().array() -= 1.0;
    Eigen::PartialPivLU<Matrix> alu(a);
    const double minor = alu.determinant();
    if (!(minor / det > 0.0)) return inf;
    nll.add_product(static_cast<double>(n), -std::log(minor / det));
    if (grad) gk(idx, idx) -= (static_cast<double>(n) / n_total) * alu.inverse().transpose();
  }
  const double avg_nll = nll.value() / n_total;

  double pen = 0.0;
  Matrix gm;  // gradient w.r.t. the middle factor (certificate mode)
  Matrix gc;
  if (mode == PositivityMode::Enumeration) {
    for (StateMask m : allowed) {
      const double pr = principal_minor_minus_identity(lam, m) / det;
      if (pr >= tau_p) continue;
      const double h = tau_p - pr;
      pen += mu * h * h;
      if (!grad) continue;
      // dp = (tr(adj(A) dA) - p det tr(Sigma dK)) / det
      const double coeff = -2.0 * mu * h / det;
      const IndexList idx = mask_to_indices(m);
      if (!idx.empty()) {
        Matrix a = lam(idx, idx);
        a.diagonal().array() -= 1.0;
        gk(idx, idx) += coeff * adjugate(a).transpose();
      }
      gk -= coeff * pr * det * sigma.transpose();
    }
  } else {
    const Matrix mid = middle_factor(schema, sp);
    const Matrix b = mid * sp.c;
    Matrix gb = Matrix::Zero(b.rows(), b.cols());
    gc = Matrix::Zero(b.rows(), b.cols());
    for (Eigen::Index k = 0; k < b.rows(); ++k) {
      const double mb = row_margin(b, k);
      if (mb < 0.0) {
        pen += mu * mb * mb;
        detail::add_margin_gradient(b, k, 2.0 * mu * mb, gb);
      }
      const double mc = row_margin(sp.c, k);
      if (mc < kDominanceTauC) {
        const double h = kDominanceTauC - mc;
        pen += mu * h * h;
        detail::add_margin_gradient(sp.c, k, -2.0 * mu * h, gc);
      }
    }
    if (grad) {
      gc += mid.transpose() * gb;
      gm = gb * sp.c.transpose();
    }
  }

  if (ev) *ev = {avg_nll + pen, avg_nll * n_total, pen};
  if (grad) {
    grad->setZero(L.size());
    chain_lambda(schema, sp, L, th, gk, *grad);
    if (mode == PositivityMode::Certificate) {
      const int q = L.q;
      const int a = L.a;
      const Matrix grr = gm.topLeftCorner(q, q);
      chain_psi(schema, sp, grr, *grad);
      if (a > 0) {
        const Matrix w = build_w(schema, sp.w, a);
        chain_w(schema, L, grr * sp.v - gm.topRightCorner(q, a), *grad);
        grad->segment(L.v_off(), q * a) += (grr.transpose() * w - gm.bottomLeftCorner(a, q).transpose()).reshaped();
      }
      grad->segment(L.c_off(), (q + a) * (q + a)) += gc.reshaped();
    }
  }
  return avg_nll + pen;
}

/// Independent-model biases from smoothed empirical level frequencies.
inline std::vector<Vector> empirical_biases(const VariableSchema& schema, const StateCounts& sc, double cap,
                                            std::vector<std::string>* warnings) {
  std::vector<Vector> out;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& v = schema.variable(j);
    const auto& blk = schema.block(j);
    std::vector<double> freq(static_cast<std::size_t>(v.levels), 0.0);
    for (const auto& [m, n] : sc.counts) {
      const auto bits = DummyState::from_mask(m >> blk.offset, blk.size).bits;
      freq[static_cast<std::size_t>(decode_block(v.kind, bits))] += static_cast<double>(n);
    }
    for (std::size_t l = 0; l < freq.size(); ++l) {
      if (freq[l] == 0.0 && warnings) {
        warnings->push_back("level " + std::to_string(l) + " of '" + v.name + "' never observed; its bias is unbounded below");
      }
    }
    Vector b(blk.size);
    double prev = 0.0;
    for (int l = 1; l < v.levels; ++l) {
      const double logodds = std::clamp(std::log((freq[static_cast<std::size_t>(l)] + 0.5) / (freq[0] + 0.5)), -cap, cap);
      if (v.kind == VariableKind::Categorical) {
        b(l - 1) = logodds;
      } else {
        b(l - 1) = logodds - prev;
        prev = logodds;
      }
    }
    out.push_back(b);
  }
  return out;
}

}  // namespace detail

/// Fits with a fixed auxiliary dimension; best of `restarts` initialisations.
inline FitReport fit_grassmann(const VariableSchema& schema, const StateCounts& sc, const FitConfig& cfg) {
  cfg.validate();
  if (sc.n <= 0) throw IngestError("dataset has no rows");
  if (cfg.positivity == PositivityMode::Certificate && !schema.binary_only()) {
    throw PositivityError(
        "the dominance certificate cannot hold for ordinal variables with >= 3 levels or categorical variables "
        "with >= 3 levels; use enumeration positivity for this schema");
  }
  const bool with_c = cfg.positivity == PositivityMode::Certificate;
  const ParamLayout L(schema, cfg.a, with_c);
  const auto allowed = enumerate_allowed_masks(schema, EnumerationCaps::from_env().allowed_states);

  FitReport best;
  bool have_best = false;
  std::vector<double> restart_nll;
  std::vector<std::string> warnings;
  const auto b0 = detail::empirical_biases(schema, sc, cfg.b_cap, &warnings);

  for (int r = 0; r < cfg.restarts; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss(0.0, cfg.init_sd);
    auto base = StructuredParams::independent(schema, cfg.a);
    base.b = b0;
    for (auto& w : base.w) {
      for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = gauss(rng);
    }
    for (Eigen::Index i = 0; i < base.v.size(); ++i) base.v.data()[i] = gauss(rng);
    Vector th = pack(schema, base, with_c);

    FitReport rep;
    rep.a = cfg.a;
    rep.n = sc.n;
    rep.positivity = cfg.positivity;
    LbfgsResult opt;
    for (double mu : cfg.penalty_schedule) {
      const ObjectiveFn fg = [&](const Vector& x, Vector& g) {
        return detail::penalized_objective(schema, L, base, sc, allowed, cfg.positivity, mu, cfg.tau_p, x, &g);
      };
      LbfgsOptions lo;
      lo.max_iter = cfg.max_iter;
      lo.grad_tol = cfg.grad_tol;
      opt = minimize_lbfgs(fg, th, lo);
      th = opt.x;
      rep.iterations += opt.iterations;
      rep.penalty_weight = mu;
      rep.stage_history.push_back(opt.history);
      const auto sp = unpack(schema, L, th, base);
      const auto dom = assemble_b(schema, sp);
      bool feasible = false;
      if (with_c) {
        feasible = dom.worst_b >= -1e-10 && dom.worst_c >= kDominanceTauC;
      } else {
        try {
          (void)assemble_lambda(schema, sp, PositivityCheck::Enumeration);
          feasible = true;
        } catch (const NumericalError&) {
        }
      }
      rep.feasible = feasible;
      if (feasible) break;
    }
    rep.params = unpack(schema, L, th, base);
    rep.status = to_string(opt.status);
    rep.gradient_norm = opt.grad.size() ? opt.grad.cwiseAbs().maxCoeff() : 0.0;
    rep.penalized_objective = opt.f;
    const bool optimum = opt.status == LbfgsStatus::GradientConverged ||
                         (opt.status == LbfgsStatus::Stalled && rep.gradient_norm <= 100.0 * cfg.grad_tol);
    rep.converged = optimum && rep.feasible;
    const auto p = assemble_lambda(schema, rep.params, PositivityCheck::None);
    rep.nll = negative_log_likelihood(p, sc).nll;
    restart_nll.push_back(rep.nll);
    rep.restart_used = r;
    const bool better = !have_best || rep.nll < best.nll - 1e-9 * std::max(1.0, std::abs(best.nll)) ||
                        (std::abs(rep.nll - best.nll) <= 1e-9 * std::max(1.0, std::abs(best.nll)) &&
                         pack(schema, rep.params, with_c).norm() < pack(schema, best.params, with_c).norm());
    if (better) {
      best = std::move(rep);
      have_best = true;
    }
  }

  const auto p = assemble_lambda(schema, best.params, PositivityCheck::None);
  const auto dom = assemble_b(schema, best.params);
  best.worst_b_margin = dom.worst_b;
  best.worst_c_margin = dom.worst_c;
  best.certified = dom.certified();
  best.min_allowed_probability = std::numeric_limits<double>::infinity();
  for (StateMask m : allowed) best.min_allowed_probability = std::min(best.min_allowed_probability, joint_probability(p, m));
  const auto mom = moments(p);
  best.mean = mom.mean;
  best.correlation = correlation_from_covariance(mom.cov);
  best.empirical_mean = empirical_mean(schema.q(), sc);
  best.empirical_correlation = empirical_correlation(schema.q(), sc);
  best.restart_nll = restart_nll;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (best.params.b[j].cwiseAbs().maxCoeff() > cfg.b_cap) {
      warnings.push_back("bias of '" + schema.variable(j).name + "' exceeds " + std::to_string(cfg.b_cap));
    }
  }
  best.warnings = std::move(warnings);
  return best;
}

inline FitReport fit_grassmann(const VariableSchema& schema, const std::vector<Record>& rows, const FitConfig& cfg) {
  return fit_grassmann(schema, state_counts(schema, rows), cfg);
}

struct SweepReport {
  std::vector<FitReport> fits;  ///< a = 0 .. a_max
  int chosen = 0;
};

/// Fits a = 0..a_max and picks the smallest a whose NLL is within
/// max(0.5, 1% of the total improvement) of the best.
inline SweepReport fit_latent_sweep(const VariableSchema& schema, const StateCounts& sc, FitConfig cfg, int a_max) {
  if (a_max < 0) throw RangeError("sweep upper bound must be >= 0");
  SweepReport out;
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a <= a_max; ++a) {
    cfg.a = a;
    out.fits.push_back(fit_grassmann(schema, sc, cfg));
    best = std::min(best, out.fits.back().nll);
  }
  const double slack = std::max(0.5, 0.01 * (out.fits.front().nll - best));
  for (int a = 0; a <= a_max; ++a) {
    if (out.fits[static_cast<std::size_t>(a)].nll - best <= slack) {
      out.chosen = a;
      break;
    }
  }
  return out;
}

}  // namespace grasscat

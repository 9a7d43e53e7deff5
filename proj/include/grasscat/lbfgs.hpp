#pragma once

// Limited-memory BFGS with Armijo backtracking. Objectives may return a
// non-finite value to reject a trial point; the line search then shrinks.

#include <cmath>
#include <deque>
#include <functional>
#include <limits>

#include "grasscat/linalg.hpp"

namespace grasscat {

struct LbfgsOptions {
  int max_iter = 500;
  int memory = 10;
  double grad_tol = 1e-6;  ///< on the max-abs gradient entry
  double f_tol = 1e-14;    ///< relative decrease below which we count a stall
  int stall_limit = 5;
  double armijo = 1e-4;
  int max_backtracks = 60;
};

enum class LbfgsStatus { GradientConverged, Stalled, MaxIterations, LineSearchFailed };

inline const char* to_string(LbfgsStatus s) {
  switch (s) {
    case LbfgsStatus::GradientConverged: return "gradient_converged";
    case LbfgsStatus::Stalled: return "stalled";
    case LbfgsStatus::MaxIterations: return "max_iterations";
    case LbfgsStatus::LineSearchFailed: return "line_search_failed";
  }
  return "?";
}

struct LbfgsResult {
  Vector x;
  double f = 0.0;
  Vector grad;
  int iterations = 0;
  LbfgsStatus status = LbfgsStatus::MaxIterations;
  std::vector<double> history;  ///< objective after each accepted step
};

/// fg(x, grad) returns f(x) and fills grad.
using ObjectiveFn = std::function<double(const Vector&, Vector&)>;

inline LbfgsResult minimize_lbfgs(const ObjectiveFn& fg, Vector x0, const LbfgsOptions& opt = {}) {
  LbfgsResult res;
  res.x = std::move(x0);
  res.grad = Vector::Zero(res.x.size());
  res.f = fg(res.x, res.grad);
  if (!std::isfinite(res.f)) {
    res.status = LbfgsStatus::LineSearchFailed;
    return res;
  }
  res.history.push_back(res.f);
  std::deque<Vector> s_hist;
  std::deque<Vector> y_hist;
  std::deque<double> rho_hist;
  int stalls = 0;
  Vector g_new(res.x.size());
  for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
    if (res.x.size() == 0 || res.grad.cwiseAbs().maxCoeff() <= opt.grad_tol) {
      res.status = LbfgsStatus::GradientConverged;
      return res;
    }
    // two-loop recursion
    Vector d = -res.grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(d);
      d -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(d);
      d += (alpha[i] - beta) * s_hist[i];
    }
    double slope = res.grad.dot(d);
    if (!(slope < 0.0)) {
      // lost descent: restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -res.grad;
      slope = -res.grad.squaredNorm();
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(d.cwiseAbs().maxCoeff(), 1e-300)) : 1.0;
    bool accepted = false;
    double f_new = 0.0;
    Vector x_new;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      x_new = res.x + step * d;
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= res.f + opt.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.status = LbfgsStatus::LineSearchFailed;
      return res;
    }
    const Vector s = x_new - res.x;
    const Vector y = g_new - res.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double decrease = res.f - f_new;
    res.x = x_new;
    res.f = f_new;
    res.grad = g_new;
    res.history.push_back(f_new);
    stalls = decrease <= opt.f_tol * std::max(1.0, std::abs(f_new)) ? stalls + 1 : 0;
    if (stalls >= opt.stall_limit) {
      ++res.iterations;
      res.status = LbfgsStatus::Stalled;
      return res;
    }
  }
  res.status = res.grad.cwiseAbs().maxCoeff() <= opt.grad_tol ? LbfgsStatus::GradientConverged
                                                              : LbfgsStatus::MaxIterations;
  return res;
}

}  // namespace grasscat

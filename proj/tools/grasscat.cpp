// grasscat: command-line front end.
// Exit codes: 0 ok, 1 validation error, 2 numerical failure, 64 usage.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "grasscat/grasscat.hpp"

using namespace grasscat;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitUsage = 64;

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    write_text_file(path, content);
  }
}

std::vector<std::string> split_list(const std::string& s) {
  if (s.empty()) return {};
  return split_csv_line(s);
}

std::pair<int, int> parse_range(const std::string& s) {
  const auto colon = s.find(':');
  try {
    if (colon == std::string::npos) {
      const int v = std::stoi(s);
      return {v, v};
    }
    return {std::stoi(s.substr(0, colon)), std::stoi(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw RangeError("range '" + s + "' must look like LO:HI");
  }
}

// Weights over an enumerated state list, any model kind.
struct StateWeights {
  std::vector<StateMask> states;
  std::vector<double> weights;
};

StateWeights state_weights(const ModelFile& m) {
  StateWeights sw;
  switch (m.kind) {
    case ModelKind::Grassmann:
      sw.states = enumerate_allowed_masks(m.schema, EnumerationCaps::from_env().allowed_states);
      for (auto s : sw.states) sw.weights.push_back(joint_probability(m.grassmann, s));
      break;
    case ModelKind::Factor: {
      auto mw = mixture_weights(m.schema, m.factor);
      sw.states = std::move(mw.states);
      sw.weights = std::move(mw.weights);
      break;
    }
    case ModelKind::Mixed:
      sw.weights = mixed_weights(m.mixed);
      for (std::size_t i = 0; i < sw.weights.size(); ++i) sw.states.push_back(static_cast<StateMask>(i));
      break;
  }
  return sw;
}

Moments enumerated_moments(const StateWeights& sw, int q) {
  Moments mo;
  mo.mean = Vector::Zero(q);
  Matrix second = Matrix::Zero(q, q);
  for (std::size_t i = 0; i < sw.states.size(); ++i) {
    const Vector y = state_vector(sw.states[i], q);
    mo.mean += sw.weights[i] * y;
    second += sw.weights[i] * y * y.transpose();
  }
  mo.cov = second - mo.mean * mo.mean.transpose();
  return mo;
}

std::string mean_csv(const std::vector<std::string>& labels, const Vector& model, const Vector* empirical) {
  std::string out = csv_line(empirical ? std::vector<std::string>{"dummy", "model", "empirical"}
                                       : std::vector<std::string>{"dummy", "mean"});
  for (Eigen::Index i = 0; i < model.size(); ++i) {
    std::vector<std::string> f{labels[static_cast<std::size_t>(i)], format_double(model(i))};
    if (empirical) f.push_back(format_double((*empirical)(i)));
    out += csv_line(f);
  }
  return out;
}

std::string correlation_pairs_csv(const std::vector<std::string>& labels, const Matrix& model, const Matrix& emp) {
  std::string out = csv_line({"row", "col", "model", "empirical"});
  for (Eigen::Index r = 0; r < model.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.cols(); ++c) {
      out += csv_line({labels[static_cast<std::size_t>(r)], labels[static_cast<std::size_t>(c)],
                       format_double(model(r, c)), format_double(emp(r, c))});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct FitOpts {
  std::string schema, data, out, positivity = "enumeration", correlation_out, mean_out;
  int latent = 2, sweep = -1, restarts = 3, max_iter = 2000;
  double grad_tol = 1e-6;
  std::uint64_t seed = 1;
};

int run_fit(const FitOpts& o) {
  const auto schema = load_schema(o.schema);
  const auto data = load_data_csv(o.data, schema);
  FitConfig cfg;
  cfg.a = o.latent;
  cfg.restarts = o.restarts;
  cfg.max_iter = o.max_iter;
  cfg.grad_tol = o.grad_tol;
  cfg.seed = o.seed;
  if (o.positivity == "certificate") {
    cfg.positivity = PositivityMode::Certificate;
  } else if (o.positivity != "enumeration") {
    throw RangeError("--positivity must be enumeration or certificate");
  }
  const auto sc = state_counts(schema, data.rows);
  FitReport rep;
  if (o.sweep >= 0) {
    auto sweep = fit_latent_sweep(schema, sc, cfg, o.sweep);
    std::cout << "latent sweep:";
    for (const auto& f : sweep.fits) std::cout << " a=" << f.a << " nll=" << format_fixed(f.nll, 6);
    std::cout << "\nchosen a=" << sweep.fits[static_cast<std::size_t>(sweep.chosen)].a << "\n";
    rep = sweep.fits[static_cast<std::size_t>(sweep.chosen)];
  } else {
    rep = fit_grassmann(schema, sc, cfg);
  }
  ModelFile m;
  m.schema = schema;
  m.kind = ModelKind::Grassmann;
  m.structured = rep.params;
  Matrix lam = lambda_minus_identity(schema, rep.params);
  lam.diagonal().array() += 1.0;
  m.grassmann = GrassmannParams::from_lambda(lam);
  m.fit_report = fit_report_to_json(rep);
  write_text_file(o.out, serialize_model(m));
  const auto labels = dummy_labels(schema);
  std::cout << "n=" << rep.n << " a=" << rep.a << " nll=" << format_double(rep.nll) << " status=" << rep.status
            << " converged=" << (rep.converged ? "yes" : "no") << " feasible=" << (rep.feasible ? "yes" : "no") << "\n";
  for (const auto& w : rep.warnings) std::cout << "warning: " << w << "\n";
  if (!rep.converged) std::cout << "warning: optimiser did not converge\n";
  if (!o.mean_out.empty()) emit(o.mean_out, mean_csv(labels, rep.mean, &rep.empirical_mean));
  if (!o.correlation_out.empty()) {
    emit(o.correlation_out, correlation_pairs_csv(labels, rep.correlation, rep.empirical_correlation));
  }
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

struct MomentsOpts {
  std::string model, mean_out, correlation_out;
};

int run_moments(const MomentsOpts& o) {
  const auto m = load_model(o.model);
  const int q = m.schema.q();
  const Moments mo = m.kind == ModelKind::Grassmann ? moments(m.grassmann) : enumerated_moments(state_weights(m), q);
  const auto labels = dummy_labels(m.schema);
  const auto corr = correlation_from_covariance(mo.cov);
  const bool to_files = !o.mean_out.empty() || !o.correlation_out.empty();
  if (!o.mean_out.empty()) emit(o.mean_out, mean_csv(labels, mo.mean, nullptr));
  if (!o.correlation_out.empty()) emit(o.correlation_out, matrix_csv(corr, labels));
  if (!to_files) {
    std::cout << mean_csv(labels, mo.mean, nullptr) << "\n" << matrix_csv(corr, labels);
  }
  return 0;
}

struct ProbOpts {
  std::string model;
  std::vector<std::string> given, query;
};

int run_prob(const ProbOpts& o) {
  const auto m = load_model(o.model);
  const Pattern given = parse_conditions(m.schema, o.given);
  const Pattern query = parse_conditions(m.schema, o.query);
  QueryResult r;
  if (m.kind == ModelKind::Grassmann) {
    r = evaluate_query(query, given, [&](const Pattern& p) { return pattern_mass(m.grassmann, p); });
  } else {
    const auto sw = state_weights(m);
    r = evaluate_query(query, given, [&](const Pattern& p) { return pattern_mass(sw.states, sw.weights, p); });
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& e : v) s += (s.empty() ? "" : ", ") + e;
    return s.empty() ? std::string("-") : s;
  };
  std::cout << "query: " << join(o.query) << "\n"
            << "given: " << join(o.given) << "\n"
            << "P(query, given) = " << format_double(r.joint) << "\n"
            << "P(given) = " << format_double(r.given) << "\n"
            << "P(query | given) = " << format_double(r.conditional) << "\n";
  return 0;
}

struct SampleOpts {
  std::string model, out;
  std::size_t n = 1000;
  std::uint64_t seed = 1;
};

int run_sample(const SampleOpts& o) {
  const auto m = load_model(o.model);
  std::string text;
  switch (m.kind) {
    case ModelKind::Grassmann:
      text = records_to_csv(m.schema, sample_records(m.grassmann, m.schema, o.n, o.seed));
      break;
    case ModelKind::Factor: {
      const auto s = sample_factor(m.factor, m.schema, o.n, o.seed);
      text = records_to_csv(m.schema, s.rows, &s.x, m.continuous);
      break;
    }
    case ModelKind::Mixed: {
      const auto s = sample_mixed(m.mixed, m.schema, o.n, o.seed);
      text = records_to_csv(m.schema, s.rows, &s.x, m.continuous);
      break;
    }
  }
  emit(o.out, text);
  return 0;
}

struct FaOpts {
  std::string schema, data, out, continuous, bic_range, bic_out, model, svg, scores, loadings;
  int latent = 2, restarts = 3, max_iter = 3000;
  double grad_tol = 1e-6;
  std::uint64_t seed = 1;
};

FactorFitConfig fa_config(const FaOpts& o) {
  FactorFitConfig cfg;
  cfg.p_z = o.latent;
  cfg.restarts = o.restarts;
  cfg.max_iter = o.max_iter;
  cfg.grad_tol = o.grad_tol;
  cfg.seed = o.seed;
  return cfg;
}

std::string bic_csv(const BicTable& t) {
  std::string out = csv_line({"p_z", "log_likelihood", "k", "bic", "converged"});
  for (const auto& r : t.rows) {
    out += csv_line({std::to_string(r.p_z), format_double(r.log_likelihood), std::to_string(r.k), format_double(r.bic),
                     r.converged ? "true" : "false"});
  }
  return out;
}

void print_bic(const BicTable& t) {
  for (const auto& r : t.rows) {
    std::printf("p_z=%d  logL=%.6f  k=%lld  BIC=%.6f%s\n", r.p_z, r.log_likelihood, static_cast<long long>(r.k), r.bic,
                r.converged ? "" : "  (not converged)");
  }
  std::printf("chosen p_z=%d (BIC margin %.6f)\n", t.chosen, t.margin);
}

int run_fa_fit(const FaOpts& o) {
  const auto schema = load_schema(o.schema);
  const auto cont = split_list(o.continuous);
  const auto table = load_data_csv(o.data, schema, cont);
  const FactorData data{table.rows, table.x};
  FactorFitReport rep;
  if (!o.bic_range.empty()) {
    const auto [lo, hi] = parse_range(o.bic_range);
    auto t = select_dimension_bic(schema, data, lo, hi, fa_config(o));
    print_bic(t);
    if (!o.bic_out.empty()) emit(o.bic_out, bic_csv(t));
    for (auto& f : t.fits) {
      if (f.model.p_z() == t.chosen) rep = std::move(f);
    }
  } else {
    rep = fit_factor_model(schema, data, fa_config(o));
  }
  ModelFile m;
  m.schema = schema;
  m.kind = ModelKind::Factor;
  m.factor = rep.model;
  m.continuous = cont;
  m.fit_report = factor_report_to_json(rep);
  write_text_file(o.out, serialize_model(m));
  std::cout << "n=" << rep.n << " p_z=" << rep.model.p_z() << " logL=" << format_double(rep.log_likelihood)
            << " BIC=" << format_double(rep.bic) << " status=" << rep.status
            << " converged=" << (rep.converged ? "yes" : "no") << "\n";
  for (Eigen::Index k = 0; k < rep.ratios.size(); ++k) std::cout << axis_label(static_cast<int>(k), 100.0 * rep.ratios(k)) << "\n";
  if (!rep.converged) std::cout << "warning: optimiser did not converge\n";
  std::cout << "wrote " << o.out << "\n";
  return 0;
}

int run_fa_bic(const FaOpts& o) {
  const auto schema = load_schema(o.schema);
  const auto cont = split_list(o.continuous);
  const auto table = load_data_csv(o.data, schema, cont);
  const auto [lo, hi] = parse_range(o.bic_range.empty() ? "0:3" : o.bic_range);
  const auto t = select_dimension_bic(schema, FactorData{table.rows, table.x}, lo, hi, fa_config(o));
  print_bic(t);
  if (!o.bic_out.empty()) emit(o.bic_out, bic_csv(t));
  return 0;
}

int run_fa_biplot(const FaOpts& o) {
  const auto m = load_model(o.model);
  if (m.kind != ModelKind::Factor) throw SchemaError(o.model + ": biplot needs a factor model");
  const auto table = load_data_csv(o.data, m.schema, m.continuous);
  FactorModel fm = m.factor;
  if (fm.p_z() > 0 && !fm.is_canonical()) fm = canonicalize(fm);
  if (fm.p_z() > 0) fm = fix_rotation(fm).model;
  const auto bd = biplot_export(fm, m.schema, FactorData{table.rows, table.x}, {o.svg, o.scores, o.loadings});
  std::cout << bd.points.size() << " distinct points, " << bd.arrows.size() << " loading vectors\n";
  for (int k = 0; k < bd.dims; ++k) std::cout << axis_label(k, bd.ratios_percent(k)) << "\n";
  if (bd.padded) std::cout << "note: fewer than two latent dimensions; axes padded with zeros\n";
  return 0;
}

struct MixedOpts {
  std::string model, x, y;
  std::vector<std::string> given;
};

int run_mixed_eval(const MixedOpts& o) {
  const auto m = load_model(o.model);
  if (m.kind != ModelKind::Mixed) throw SchemaError(o.model + ": mixed eval needs a mixed model");
  const auto& mp = m.mixed;
  const auto xs = split_list(o.x);
  const auto ys = split_list(o.y);
  if (static_cast<int>(xs.size()) != mp.p()) throw RangeError("--x needs " + std::to_string(mp.p()) + " entries");
  if (static_cast<int>(ys.size()) != mp.q()) throw RangeError("--y needs " + std::to_string(mp.q()) + " entries");
  std::vector<bool> given_x(xs.size(), false), given_y(ys.size(), false);
  for (const auto& g : o.given) {
    const auto it = std::find(m.continuous.begin(), m.continuous.end(), g);
    if (it != m.continuous.end()) {
      given_x[static_cast<std::size_t>(it - m.continuous.begin())] = true;
      continue;
    }
    const int j = m.schema.index_of(g);
    if (j < 0) throw RangeError("--given: unknown variable '" + g + "'");
    given_y[static_cast<std::size_t>(j)] = true;
  }
  MixedPartition part;
  Vector x = Vector::Zero(mp.p());
  StateMask y = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const int idx = static_cast<int>(i);
    if (xs[i] == "?") {
      if (given_x[i]) throw RangeError("'" + m.continuous[i] + "' is given but missing");
      part.l.push_back(idx);
      continue;
    }
    std::size_t used = 0;
    try {
      x(idx) = std::stod(xs[i], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != xs[i].size() || !std::isfinite(x(idx))) throw RangeError("--x entry '" + xs[i] + "' is not a number");
    (given_x[i] ? part.k : part.j).push_back(idx);
  }
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const int idx = static_cast<int>(i);
    if (ys[i] == "?") {
      if (given_y[i]) throw RangeError("'" + m.schema.variable(i).name + "' is given but missing");
      part.u.push_back(idx);
      continue;
    }
    if (ys[i] != "0" && ys[i] != "1") throw RangeError("--y entries must be 0, 1 or ?");
    if (ys[i] == "1") y |= StateMask{1} << idx;
    (given_y[i] ? part.t : part.s).push_back(idx);
  }
  double value = 0.0;
  if (o.given.empty()) {
    MixedPartition marg{{}, part.l, part.j, {}, part.u, part.s};
    value = mixed_marginal_density(mp, marg, x, y);
    std::cout << "density = " << format_double(value) << "\n";
  } else {
    value = mixed_conditional_density(mp, part, x, y);
    std::cout << "conditional density = " << format_double(value) << "\n";
  }
  return 0;
}

struct OracleOpts {
  std::string model;
  double tol = 1e-9;
};

int run_oracle_check(const OracleOpts& o) {
  const auto m = load_model(o.model);
  bool ok = true;
  auto line = [&](const std::string& name, double err, double tol) {
    const bool pass = err <= tol;
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << name << " (max error " << format_double(err) << ")\n";
  };
  if (m.kind == ModelKind::Grassmann) {
    const auto& g = m.grassmann;
    const auto table = oracle::brute_force_table(g.lambda(), EnumerationCaps::from_env().full_q);
    double e_joint = 0.0, e_zero = 0.0;
    for (StateMask s = 0; s < table.prob.size(); ++s) {
      e_joint = std::max(e_joint, std::abs(joint_probability(g, s) - table.prob[s]));
      if (!is_allowed_mask(m.schema, s)) e_zero = std::max(e_zero, std::abs(table.prob[s]));
    }
    line("joint probabilities vs cofactor determinants", e_joint, o.tol);
    line("total probability", std::abs(table.sum() - 1.0), o.tol);
    line("disallowed states carry no mass", e_zero, o.tol);
    const auto mo = moments(g);
    line("mean vs enumeration", max_abs(mo.mean - table.mean()), o.tol);
    line("covariance vs enumeration", max_abs(mo.cov - table.covariance()), o.tol);
    double e_marg = 0.0;
    for (std::size_t j = 0; j < m.schema.size(); ++j) {
      IndexList t;
      for (int r = 0; r < m.schema.block(j).size; ++r) t.push_back(m.schema.block(j).offset + r);
      const auto core = marginal_params(g, t);
      const auto ref = oracle::oracle_marginal(table, t);
      for (StateMask s = 0; s < ref.size(); ++s) e_marg = std::max(e_marg, std::abs(joint_probability(core, s) - ref[s]));
    }
    line("per-variable marginals", e_marg, o.tol);
    line("minimum probability is nonnegative", std::max(0.0, -table.min()), 1e-12);
  } else {
    const auto sw = state_weights(m);
    double sum = 0.0, neg = 0.0;
    for (double w : sw.weights) {
      sum += w;
      neg = std::max(neg, -w);
    }
    line("state weights sum to one", std::abs(sum - 1.0), 1e-12);
    line("state weights are nonnegative", neg, 1e-12);
  }
  std::cout << (ok ? "all checks passed\n" : "some checks failed\n");
  return ok ? 0 : kExitNumerical;
}

struct ValidateOpts {
  std::string schema, data, continuous;
};

int run_validate(const ValidateOpts& o) {
  const auto schema = load_schema(o.schema);
  std::cout << "schema: " << schema.size() << " variables, q=" << schema.q() << " dummies\n";
  std::size_t states = 1;
  for (const auto& v : schema.variables()) {
    std::cout << "  " << v.name << ": " << to_string(v.kind) << ", " << v.levels << " levels\n";
    states *= static_cast<std::size_t>(v.levels);
  }
  std::cout << "allowed states: " << states << " of 2^" << schema.q() << "\n";
  if (o.data.empty()) return 0;
  const auto table = load_data_csv(o.data, schema, split_list(o.continuous));
  std::cout << "data: " << table.rows.size() << " rows";
  if (table.x.cols() > 0) std::cout << ", " << table.x.cols() << " continuous columns";
  std::cout << "\n";
  for (std::size_t j = 0; j < schema.size(); ++j) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(schema.variable(j).levels), 0);
    for (const auto& r : table.rows) ++counts[static_cast<std::size_t>(r[j])];
    std::cout << "  " << schema.variable(j).name << " counts:";
    for (std::size_t l = 0; l < counts.size(); ++l) std::cout << " " << counts[l];
    std::cout << "\n";
    for (std::size_t l = 0; l < counts.size(); ++l) {
      if (counts[l] == 0) std::cout << "  warning: level " << l << " of " << schema.variable(j).name << " never observed\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Determinant-based distributions for categorical and ordinal data"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  FitOpts fit;
  auto* c_fit = app.add_subcommand("fit", "Fit the structured model by maximum likelihood");
  c_fit->add_option("--schema", fit.schema, "Schema JSON")->required();
  c_fit->add_option("--data", fit.data, "Data CSV")->required();
  c_fit->add_option("--out", fit.out, "Model JSON to write")->required();
  c_fit->add_option("--latent-dim", fit.latent, "Auxiliary dimension a")->capture_default_str();
  c_fit->add_option("--sweep", fit.sweep, "Fit a = 0..A and pick the saturation point");
  c_fit->add_option("--restarts", fit.restarts, "Random restarts")->capture_default_str();
  c_fit->add_option("--seed", fit.seed, "Seed")->capture_default_str();
  c_fit->add_option("--max-iter", fit.max_iter, "Iterations per penalty stage")->capture_default_str();
  c_fit->add_option("--grad-tol", fit.grad_tol, "Gradient tolerance")->capture_default_str();
  c_fit->add_option("--positivity", fit.positivity, "enumeration or certificate")->capture_default_str();
  c_fit->add_option("--mean-out", fit.mean_out, "CSV of model and empirical dummy means");
  c_fit->add_option("--correlation-out", fit.correlation_out, "CSV of model and empirical correlations");

  MomentsOpts mom;
  auto* c_mom = app.add_subcommand("moments", "Dummy means and correlations of a model");
  c_mom->add_option("--model", mom.model, "Model JSON")->required();
  c_mom->add_option("--mean-out", mom.mean_out, "Mean CSV");
  c_mom->add_option("--correlation-out", mom.correlation_out, "Correlation CSV");

  ProbOpts prob;
  auto* c_prob = app.add_subcommand("prob", "Joint, marginal or conditional probabilities of patterns");
  c_prob->add_option("--model", prob.model, "Model JSON")->required();
  c_prob->add_option("--given", prob.given, "Condition like Age=2, Edu>=3, Edu<2 (repeatable)");
  c_prob->add_option("--query", prob.query, "Event in the same syntax (repeatable)")->required();

  SampleOpts smp;
  auto* c_smp = app.add_subcommand("sample", "Exact samples");
  c_smp->add_option("--model", smp.model, "Model JSON")->required();
  c_smp->add_option("--n", smp.n, "Number of rows")->capture_default_str();
  c_smp->add_option("--seed", smp.seed, "Seed")->capture_default_str();
  c_smp->add_option("--out", smp.out, "CSV to write (stdout if omitted)");

  FaOpts fa;
  auto* c_fa = app.add_subcommand("fa", "Latent factor model");
  c_fa->require_subcommand(1);
  auto* c_fa_fit = c_fa->add_subcommand("fit", "Fit a factor model");
  auto* c_fa_bic = c_fa->add_subcommand("bic", "BIC over a range of latent dimensions");
  for (auto* c : {c_fa_fit, c_fa_bic}) {
    c->add_option("--schema", fa.schema, "Schema JSON")->required();
    c->add_option("--data", fa.data, "Data CSV")->required();
    c->add_option("--continuous", fa.continuous, "Comma-separated continuous column names");
    c->add_option("--restarts", fa.restarts, "Random restarts")->capture_default_str();
    c->add_option("--seed", fa.seed, "Seed")->capture_default_str();
    c->add_option("--max-iter", fa.max_iter, "Iterations per penalty stage")->capture_default_str();
    c->add_option("--grad-tol", fa.grad_tol, "Gradient tolerance")->capture_default_str();
    c->add_option("--bic-out", fa.bic_out, "BIC table CSV");
  }
  c_fa_fit->add_option("--out", fa.out, "Model JSON to write")->required();
  c_fa_fit->add_option("--latent-dim", fa.latent, "Latent dimension p_z")->capture_default_str();
  c_fa_fit->add_option("--bic-range", fa.bic_range, "Choose p_z by BIC over LO:HI");
  c_fa_bic->add_option("--range", fa.bic_range, "LO:HI")->default_str("0:3");
  auto* c_fa_biplot = c_fa->add_subcommand("biplot", "Scores, loadings and SVG biplot");
  c_fa_biplot->add_option("--model", fa.model, "Factor model JSON")->required();
  c_fa_biplot->add_option("--data", fa.data, "Data CSV")->required();
  c_fa_biplot->add_option("--out-svg", fa.svg, "SVG path");
  c_fa_biplot->add_option("--out-scores", fa.scores, "Scores CSV path");
  c_fa_biplot->add_option("--out-loadings", fa.loadings, "Loadings CSV path");

  MixedOpts mix;
  auto* c_mixed = app.add_subcommand("mixed", "Continuous and binary joint model");
  c_mixed->require_subcommand(1);
  auto* c_mixed_eval = c_mixed->add_subcommand("eval", "Marginal or conditional density");
  c_mixed_eval->add_option("--model", mix.model, "Mixed model JSON")->required();
  c_mixed_eval->add_option("--x", mix.x, "Continuous values, '?' marks missing")->required();
  c_mixed_eval->add_option("--y", mix.y, "Binary values 0/1, '?' marks missing")->required();
  c_mixed_eval->add_option("--given", mix.given, "Variables conditioned on (repeatable)");

  OracleOpts orc;
  auto* c_oracle = app.add_subcommand("oracle", "Brute-force cross-checks");
  c_oracle->require_subcommand(1);
  auto* c_oracle_check = c_oracle->add_subcommand("check", "Compare a model against enumeration");
  c_oracle_check->add_option("--model", orc.model, "Model JSON")->required();
  c_oracle_check->add_option("--tol", orc.tol, "Tolerance")->capture_default_str();

  ValidateOpts val;
  auto* c_val = app.add_subcommand("validate", "Lint a schema and optional data file");
  c_val->add_option("--schema", val.schema, "Schema JSON")->required();
  c_val->add_option("--data", val.data, "Data CSV");
  c_val->add_option("--continuous", val.continuous, "Comma-separated continuous column names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (c_fit->parsed()) return run_fit(fit);
    if (c_mom->parsed()) return run_moments(mom);
    if (c_prob->parsed()) return run_prob(prob);
    if (c_smp->parsed()) return run_sample(smp);
    if (c_fa_fit->parsed()) return run_fa_fit(fa);
    if (c_fa_bic->parsed()) return run_fa_bic(fa);
    if (c_fa_biplot->parsed()) return run_fa_biplot(fa);
    if (c_mixed_eval->parsed()) return run_mixed_eval(mix);
    if (c_oracle_check->parsed()) return run_oracle_check(orc);
    if (c_val->parsed()) return run_validate(val);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}

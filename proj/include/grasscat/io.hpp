#pragma once

// Schema JSON, data CSV and the versioned model envelope.

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "grasscat/errors.hpp"
#include "grasscat/factor.hpp"
#include "grasscat/grassmann.hpp"
#include "grasscat/mixed.hpp"
#include "grasscat/mle.hpp"
#include "grasscat/schema.hpp"
#include "grasscat/structured.hpp"
#include "grasscat/text.hpp"

namespace grasscat {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IngestError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

namespace json_detail {

inline void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> required,
                       std::initializer_list<const char*> optional = {}) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  std::set<std::string> known;
  for (const char* k : required) {
    known.insert(k);
    if (!j.contains(k)) throw SchemaError(where + ": missing field '" + k + "'");
  }
  for (const char* k : optional) known.insert(k);
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw SchemaError(where + ": unknown field '" + k + "'");
  }
}

/// NaN and infinities travel as null.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double to_num(const Json& j, const std::string& where) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw SchemaError(where + ": expected a number");
  return j.get<double>();
}

inline double to_finite(const Json& j, const std::string& where) {
  if (!j.is_number()) throw SchemaError(where + ": expected a finite number");
  return j.get<double>();
}

inline Json vec(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

inline Json mat(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec(m.row(r).transpose()));
  return a;
}

inline Vector to_vec(const Json& j, const std::string& where, Eigen::Index expect = -1) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  if (expect >= 0 && static_cast<Eigen::Index>(j.size()) != expect) {
    throw SchemaError(where + ": expected " + std::to_string(expect) + " entries, got " + std::to_string(j.size()));
  }
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = to_finite(j[i], where);
  return v;
}

inline Matrix to_mat(const Json& j, const std::string& where, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw SchemaError(where + ": expected " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = to_vec(j[static_cast<std::size_t>(r)], where, cols).transpose();
  return m;
}

inline std::size_t rows_of(const Json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  return j.size();
}

inline std::size_t cols_of(const Json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  if (j.empty()) return 0;
  if (!j[0].is_array()) throw SchemaError(where + ": expected an array of rows");
  return j[0].size();
}

}  // namespace json_detail

// ---------------------------------------------------------------------------
// Schema.

inline Json schema_to_json(const VariableSchema& s) {
  Json vars = Json::array();
  for (const auto& v : s.variables()) {
    vars.push_back(Json{{"name", v.name},
                        {"kind", v.kind == VariableKind::Categorical ? "categorical" : "ordinal"},
                        {"levels", v.levels}});
  }
  return Json{{"variables", vars}};
}

inline VariableSchema schema_from_json(const Json& j) {
  json_detail::check_keys(j, "schema", {"variables"});
  if (!j["variables"].is_array()) throw SchemaError("schema: 'variables' must be an array");
  std::vector<VariableDecl> vars;
  for (std::size_t i = 0; i < j["variables"].size(); ++i) {
    const auto& v = j["variables"][i];
    const std::string where = "schema variable " + std::to_string(i + 1);
    json_detail::check_keys(v, where, {"name", "kind", "levels"});
    if (!v["name"].is_string() || v["name"].get<std::string>().empty()) throw SchemaError(where + ": name must be a non-empty string");
    if (!v["kind"].is_string()) throw SchemaError(where + ": kind must be a string");
    if (!v["levels"].is_number_integer()) throw SchemaError(where + ": levels must be an integer");
    const auto kind = v["kind"].get<std::string>();
    VariableDecl d;
    d.name = v["name"].get<std::string>();
    if (kind == "categorical") {
      d.kind = VariableKind::Categorical;
    } else if (kind == "ordinal") {
      d.kind = VariableKind::Ordinal;
    } else {
      throw SchemaError(where + ": kind must be \"categorical\" or \"ordinal\", got \"" + kind + "\"");
    }
    const auto levels = v["levels"].get<std::int64_t>();
    if (levels < 2 || levels > 64) throw SchemaError(where + " ('" + d.name + "'): levels must be in 2..64");
    d.levels = static_cast<int>(levels);
    vars.push_back(std::move(d));
  }
  if (vars.empty()) throw SchemaError("schema declares no variables");
  VariableSchema s(std::move(vars));
  if (s.q() > kMaxMaskBits) throw SchemaError("schema has q=" + std::to_string(s.q()) + " dummies; at most 62 are supported");
  return s;
}

inline VariableSchema load_schema(const std::string& path) {
  const auto text = read_text_file(path);
  try {
    return schema_from_json(Json::parse(text));
  } catch (const Json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Data CSV.

struct DataTable {
  std::vector<Record> rows;
  Matrix x;  ///< continuous columns, in `continuous` order
  std::vector<std::string> continuous;
};

/// Header must name every schema variable once; other columns are allowed
/// only when listed in `continuous`.
inline DataTable parse_data_csv(const std::string& text, const VariableSchema& schema,
                                const std::vector<std::string>& continuous = {}, const std::string& origin = "data") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IngestError(origin + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  std::vector<int> var_col(schema.size(), -1), cont_col(continuous.size(), -1);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const int vi = schema.index_of(header[c]);
    if (vi >= 0) {
      if (var_col[static_cast<std::size_t>(vi)] >= 0) throw IngestError(origin + ": column '" + header[c] + "' appears twice");
      var_col[static_cast<std::size_t>(vi)] = static_cast<int>(c);
      continue;
    }
    const auto it = std::find(continuous.begin(), continuous.end(), header[c]);
    if (it == continuous.end()) throw IngestError(origin + ": column '" + header[c] + "' is not in the schema");
    auto& slot = cont_col[static_cast<std::size_t>(it - continuous.begin())];
    if (slot >= 0) throw IngestError(origin + ": column '" + header[c] + "' appears twice");
    slot = static_cast<int>(c);
  }
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (var_col[j] < 0) throw IngestError(origin + ": missing column '" + schema.variable(j).name + "'");
  }
  for (std::size_t k = 0; k < continuous.size(); ++k) {
    if (cont_col[k] < 0) throw IngestError(origin + ": missing continuous column '" + continuous[k] + "'");
  }
  DataTable out;
  out.continuous = continuous;
  std::vector<std::vector<double>> xs;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = origin + " line " + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw IngestError(where + ": " + std::to_string(cells.size()) + " cells, header has " + std::to_string(header.size()));
    }
    Record rec(schema.size());
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const auto& cell = cells[static_cast<std::size_t>(var_col[j])];
      std::size_t used = 0;
      long v = 0;
      try {
        v = std::stol(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (cell.empty() || used != cell.size()) {
        throw IngestError(where + ": '" + schema.variable(j).name + "' cell \"" + cell + "\" is not an integer");
      }
      if (v < 0 || v >= schema.variable(j).levels) {
        throw IngestError(where + ": '" + schema.variable(j).name + "' level " + std::to_string(v) + " outside 0.." +
                          std::to_string(schema.variable(j).levels - 1));
      }
      rec[j] = static_cast<int>(v);
    }
    std::vector<double> xrow;
    for (std::size_t k = 0; k < continuous.size(); ++k) {
      const auto& cell = cells[static_cast<std::size_t>(cont_col[k])];
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (cell.empty() || used != cell.size() || !std::isfinite(v)) {
        throw IngestError(where + ": '" + continuous[k] + "' cell \"" + cell + "\" is not a finite number");
      }
      xrow.push_back(v);
    }
    out.rows.push_back(std::move(rec));
    xs.push_back(std::move(xrow));
  }
  if (out.rows.empty()) throw IngestError(origin + ": dataset has no rows");
  out.x.resize(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(continuous.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t k = 0; k < continuous.size(); ++k) out.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = xs[i][k];
  }
  return out;
}

inline DataTable load_data_csv(const std::string& path, const VariableSchema& schema,
                               const std::vector<std::string>& continuous = {}) {
  return parse_data_csv(read_text_file(path), schema, continuous, path);
}

inline std::string records_to_csv(const VariableSchema& schema, const std::vector<Record>& rows, const Matrix* x = nullptr,
                                  const std::vector<std::string>& continuous = {}) {
  std::vector<std::string> head;
  for (const auto& v : schema.variables()) head.push_back(v.name);
  for (const auto& c : continuous) head.push_back(c);
  std::string out = csv_line(head);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<std::string> f;
    for (int v : rows[i]) f.push_back(std::to_string(v));
    if (x) {
      for (Eigen::Index k = 0; k < x->cols(); ++k) f.push_back(format_double((*x)(static_cast<Eigen::Index>(i), k)));
    }
    out += csv_line(f);
  }
  return out;
}

inline std::string matrix_csv(const Matrix& m, const std::vector<std::string>& labels) {
  std::vector<std::string> head{""};
  head.insert(head.end(), labels.begin(), labels.end());
  std::string out = csv_line(head);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<std::string> f{labels[static_cast<std::size_t>(r)]};
    for (Eigen::Index c = 0; c < m.cols(); ++c) f.push_back(format_double(m(r, c)));
    out += csv_line(f);
  }
  return out;
}

/// "Age:1", "Education:>=2": one label per dummy.
inline std::vector<std::string> dummy_labels(const VariableSchema& schema) {
  std::vector<std::string> out;
  for (const auto& v : schema.variables()) {
    for (int l = 1; l < v.levels; ++l) {
      out.push_back(v.name + (v.kind == VariableKind::Categorical ? "=" : ">=") + std::to_string(l));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model envelope.

enum class ModelKind { Grassmann, Factor, Mixed };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Grassmann: return "grassmann";
    case ModelKind::Factor: return "factor";
    case ModelKind::Mixed: return "mixed";
  }
  return "?";
}

struct ModelFile {
  VariableSchema schema;
  ModelKind kind = ModelKind::Grassmann;
  // grassmann
  GrassmannParams grassmann;
  std::optional<StructuredParams> structured;
  // factor
  FactorModel factor;
  std::vector<std::string> continuous;  ///< factor/mixed continuous column names
  // mixed
  MixedParams mixed;
  Json fit_report;  ///< null when absent
};

namespace json_detail {

inline Json structured_to_json(const StructuredParams& sp) {
  Json b = Json::array(), w = Json::array();
  for (const auto& v : sp.b) b.push_back(vec(v));
  for (const auto& v : sp.w) w.push_back(vec(v));
  return Json{{"a", sp.aux_dim()}, {"b", b}, {"w", w}, {"v", mat(sp.v)}, {"omega", vec(sp.omega)}, {"c", mat(sp.c)}};
}

inline StructuredParams structured_from_json(const Json& j, const VariableSchema& s) {
  check_keys(j, "params.structured", {"a", "b", "w", "v", "omega", "c"});
  if (!j["a"].is_number_integer() || j["a"].get<int>() < 0) throw SchemaError("params.structured.a must be an integer >= 0");
  const int a = j["a"].get<int>();
  StructuredParams sp;
  if (rows_of(j["b"], "params.structured.b") != s.size() || rows_of(j["w"], "params.structured.w") != s.size()) {
    throw SchemaError("params.structured: one b and one w vector per variable expected");
  }
  for (std::size_t v = 0; v < s.size(); ++v) {
    sp.b.push_back(to_vec(j["b"][v], "params.structured.b", s.block(v).size));
    sp.w.push_back(to_vec(j["w"][v], "params.structured.w", a));
  }
  sp.v = to_mat(j["v"], "params.structured.v", s.q(), a);
  sp.omega = to_vec(j["omega"], "params.structured.omega", a);
  sp.c = to_mat(j["c"], "params.structured.c", s.q() + a, s.q() + a);
  sp.validate(s);
  return sp;
}

inline Json names(const std::vector<std::string>& v) {
  Json a = Json::array();
  for (const auto& s : v) a.push_back(s);
  return a;
}

inline std::vector<std::string> to_names(const Json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array of names");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw SchemaError(where + ": expected strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace json_detail

inline Json model_to_json(const ModelFile& m) {
  using namespace json_detail;
  Json params;
  switch (m.kind) {
    case ModelKind::Grassmann:
      params = Json{{"lambda", mat(m.grassmann.lambda())},
                    {"structured", m.structured ? structured_to_json(*m.structured) : Json(nullptr)}};
      break;
    case ModelKind::Factor:
      params = Json{{"continuous", names(m.continuous)}, {"mu_x", vec(m.factor.mu_x)}, {"psi", vec(m.factor.psi)},
                    {"w_load", mat(m.factor.w_load)}, {"b", vec(m.factor.b)}, {"g", mat(m.factor.g)},
                    {"mu_z", vec(m.factor.mu_z)}, {"sigma_z", mat(m.factor.sigma_z)}};
      break;
    case ModelKind::Mixed:
      params = Json{{"continuous", names(m.continuous)}, {"mu", vec(m.mixed.mu)}, {"sigma", mat(m.mixed.sigma)},
                    {"lambda", mat(m.mixed.lambda)}, {"g_int", mat(m.mixed.g_int)}};
      break;
  }
  return Json{{"format_version", kFormatVersion},
              {"schema", schema_to_json(m.schema)},
              {"kind", to_string(m.kind)},
              {"params", params},
              {"fit_report", m.fit_report}};
}

inline std::string serialize_model(const ModelFile& m) { return model_to_json(m).dump(2) + "\n"; }

inline ModelFile model_from_json(const Json& j) {
  using namespace json_detail;
  check_keys(j, "model", {"format_version", "schema", "kind", "params", "fit_report"});
  if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != kFormatVersion) {
    throw SchemaError("model: unsupported format_version (expected " + std::to_string(kFormatVersion) + ")");
  }
  ModelFile m;
  m.schema = schema_from_json(j["schema"]);
  const auto& s = m.schema;
  if (!j["kind"].is_string()) throw SchemaError("model: kind must be a string");
  const auto kind = j["kind"].get<std::string>();
  const auto& p = j["params"];
  if (kind == "grassmann") {
    m.kind = ModelKind::Grassmann;
    check_keys(p, "params", {"lambda", "structured"});
    Matrix lam = to_mat(p["lambda"], "params.lambda", s.q(), s.q());
    if (!p["structured"].is_null()) {
      m.structured = structured_from_json(p["structured"], s);
      Matrix rebuilt = lambda_minus_identity(s, *m.structured);
      rebuilt.diagonal().array() += 1.0;
      const double tol = 1e-9 * std::max(1.0, max_abs(lam));
      if (max_abs(rebuilt - lam) > tol) throw ParameterError("params.lambda disagrees with params.structured");
    }
    m.grassmann = GrassmannParams::from_lambda(std::move(lam));
  } else if (kind == "factor") {
    m.kind = ModelKind::Factor;
    check_keys(p, "params", {"continuous", "mu_x", "psi", "w_load", "b", "g", "mu_z", "sigma_z"});
    m.continuous = to_names(p["continuous"], "params.continuous");
    const auto px = static_cast<Eigen::Index>(m.continuous.size());
    const auto pz = static_cast<Eigen::Index>(cols_of(p["g"], "params.g"));
    auto& f = m.factor;
    f.mu_x = to_vec(p["mu_x"], "params.mu_x", px);
    f.psi = to_vec(p["psi"], "params.psi", px);
    f.w_load = to_mat(p["w_load"], "params.w_load", px, pz);
    f.b = to_vec(p["b"], "params.b", s.q());
    f.g = to_mat(p["g"], "params.g", s.q(), pz);
    f.mu_z = to_vec(p["mu_z"], "params.mu_z", pz);
    f.sigma_z = to_mat(p["sigma_z"], "params.sigma_z", pz, pz);
    f.validate(s);
  } else if (kind == "mixed") {
    m.kind = ModelKind::Mixed;
    check_keys(p, "params", {"continuous", "mu", "sigma", "lambda", "g_int"});
    if (!s.binary_only()) throw SchemaError("mixed models need a schema of binary variables");
    m.continuous = to_names(p["continuous"], "params.continuous");
    const auto pp = static_cast<Eigen::Index>(m.continuous.size());
    auto& x = m.mixed;
    x.mu = to_vec(p["mu"], "params.mu", pp);
    x.sigma = to_mat(p["sigma"], "params.sigma", pp, pp);
    x.lambda = to_mat(p["lambda"], "params.lambda", s.q(), s.q());
    x.g_int = to_mat(p["g_int"], "params.g_int", s.q(), pp);
    x.validate();
  } else {
    throw SchemaError("model: kind must be grassmann, factor or mixed, got \"" + kind + "\"");
  }
  if (!j["fit_report"].is_null() && !j["fit_report"].is_object()) throw SchemaError("model: fit_report must be an object or null");
  m.fit_report = j["fit_report"];
  return m;
}

inline ModelFile parse_model(const std::string& text, const std::string& origin = "model") {
  try {
    return model_from_json(Json::parse(text));
  } catch (const Json::parse_error& e) {
    throw SchemaError(origin + ": " + e.what());
  } catch (const Json::type_error& e) {
    throw SchemaError(origin + ": " + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(origin + ": " + e.what());
  }
}

inline ModelFile load_model(const std::string& path) { return parse_model(read_text_file(path), path); }

// ---------------------------------------------------------------------------
// Fit reports.

inline Json fit_report_to_json(const FitReport& r) {
  using namespace json_detail;
  Json restarts = Json::array(), warnings = Json::array();
  for (double v : r.restart_nll) restarts.push_back(num(v));
  for (const auto& w : r.warnings) warnings.push_back(w);
  return Json{{"a", r.a},
              {"n", r.n},
              {"nll", num(r.nll)},
              {"penalized_objective", num(r.penalized_objective)},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"feasible", r.feasible},
              {"status", r.status},
              {"positivity", r.positivity == PositivityMode::Certificate ? "certificate" : "enumeration"},
              {"certified", r.certified},
              {"worst_b_margin", num(r.worst_b_margin)},
              {"worst_c_margin", num(r.worst_c_margin)},
              {"min_allowed_probability", num(r.min_allowed_probability)},
              {"penalty_weight", num(r.penalty_weight)},
              {"gradient_norm", num(r.gradient_norm)},
              {"restart_used", r.restart_used},
              {"restart_nll", restarts},
              {"warnings", warnings},
              {"mean", vec(r.mean)},
              {"empirical_mean", vec(r.empirical_mean)}};
}

inline Json factor_report_to_json(const FactorFitReport& r) {
  using namespace json_detail;
  Json restarts = Json::array();
  for (double v : r.restart_nll) restarts.push_back(num(v));
  return Json{{"p_z", r.model.p_z()},
              {"n", r.n},
              {"log_likelihood", num(r.log_likelihood)},
              {"nll", num(r.nll)},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"status", r.status},
              {"contribution_ratios", vec(r.ratios)},
              {"common_norm", num(r.common_norm)},
              {"norm_spread", num(r.norm_spread)},
              {"parameter_count", r.parameter_count},
              {"bic", num(r.bic)},
              {"restart_nll", restarts},
              {"mean", vec(r.mean)},
              {"empirical_mean", vec(r.empirical_mean)}};
}

}  // namespace grasscat

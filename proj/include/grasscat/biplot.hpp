#pragma once

// Factor scores + combined loading vectors as CSV tables and a small SVG.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "grasscat/errors.hpp"
#include "grasscat/factor.hpp"
#include "grasscat/text.hpp"

namespace grasscat {

struct BiplotPoint {
  std::size_t row_id = 0;         ///< 1-based, first row of the group
  Vector score;                   ///< length dims
  std::size_t multiplicity = 1;   ///< identical (x, y) rows merged
};

struct BiplotArrow {
  std::string variable;
  std::string level_label;
  Vector g;  ///< length dims
};

struct BiplotData {
  int dims = 2;        ///< max(p_z, 2)
  bool padded = false; ///< p_z < 2, trailing axes are zero
  std::vector<BiplotPoint> points;
  std::vector<BiplotArrow> arrows;
  Vector ratios_percent;  ///< per axis, length dims
};

inline std::string axis_label(int k, double percent) {
  return "PC" + std::to_string(k + 1) + " (" + format_fixed(percent, 1) + "%)";
}

/// Expects a rotation-fixed model; ratios are read off diag(G^T G).
inline BiplotData biplot_data(const FactorModel& model, const VariableSchema& schema, const FactorData& data) {
  model.validate(schema);
  if (data.x.rows() != static_cast<Eigen::Index>(data.n()) || data.p_x() != model.p_x()) {
    throw IngestError("continuous block does not match the model");
  }
  const int pz = model.p_z();
  BiplotData out;
  out.dims = std::max(pz, 2);
  out.padded = pz < 2;
  auto pad = [&](const Vector& v) {
    Vector o = Vector::Zero(out.dims);
    o.head(v.size()) = v;
    return o;
  };

  std::map<std::pair<Record, std::vector<double>>, std::size_t> seen;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const Vector xi = data.x.row(static_cast<Eigen::Index>(i)).transpose();
    std::pair<Record, std::vector<double>> key{data.rows[i], std::vector<double>(xi.data(), xi.data() + xi.size())};
    const auto it = seen.find(key);
    if (it != seen.end()) {
      ++out.points[it->second].multiplicity;
      continue;
    }
    const StateMask y = encode_record(schema, data.rows[i]).mask();
    seen.emplace(std::move(key), out.points.size());
    out.points.push_back({i + 1, pad(posterior(model, xi, y).m), 1});
  }

  const auto comb = combined_loadings(schema, model.g);
  for (const auto& e : comb.entries) {
    out.arrows.push_back({schema.variable(e.variable).name, std::to_string(e.level), pad(e.g)});
  }

  out.ratios_percent = Vector::Zero(out.dims);
  if (pz > 0) {
    const Vector d = (model.g.transpose() * model.g).diagonal();
    const double tr = d.sum();
    if (tr > 0.0) out.ratios_percent.head(pz) = 100.0 * d / tr;
  }
  return out;
}

inline std::string scores_csv(const BiplotData& bd) {
  std::vector<std::string> head{"row_id"};
  for (int k = 0; k < bd.dims; ++k) head.push_back("pc" + std::to_string(k + 1));
  head.push_back("multiplicity");
  std::string out = csv_line(head);
  for (const auto& p : bd.points) {
    std::vector<std::string> f{std::to_string(p.row_id)};
    for (int k = 0; k < bd.dims; ++k) f.push_back(format_double(p.score(k)));
    f.push_back(std::to_string(p.multiplicity));
    out += csv_line(f);
  }
  return out;
}

inline std::string loadings_csv(const BiplotData& bd) {
  std::vector<std::string> head{"variable", "level_label"};
  for (int k = 0; k < bd.dims; ++k) head.push_back("pc" + std::to_string(k + 1));
  std::string out = csv_line(head);
  for (const auto& a : bd.arrows) {
    std::vector<std::string> f{a.variable, a.level_label};
    for (int k = 0; k < bd.dims; ++k) f.push_back(format_double(a.g(k)));
    out += csv_line(f);
  }
  return out;
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

/// First two axes. Point area grows linearly with multiplicity; arrows are
/// rescaled to the score cloud.
inline std::string biplot_svg(const BiplotData& bd) {
  const double size = 640.0, margin = 60.0, half = (size - 2 * margin) / 2.0;
  const double cx = size / 2.0, cy = size / 2.0;
  double score_r = 0.0, arrow_r = 0.0;
  for (const auto& p : bd.points) score_r = std::max(score_r, std::hypot(p.score(0), p.score(1)));
  for (const auto& a : bd.arrows) arrow_r = std::max(arrow_r, std::hypot(a.g(0), a.g(1)));
  const double extent = score_r > 0.0 ? score_r : (arrow_r > 0.0 ? arrow_r : 1.0);
  const double arrow_scale = arrow_r > 0.0 ? 0.9 * extent / arrow_r : 0.0;
  auto px = [&](double v) { return format_fixed(cx + v / extent * half, 2); };
  auto py = [&](double v) { return format_fixed(cy - v / extent * half, 2); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" viewBox=\"0 0 640 640\">\n";
  s += "<defs><marker id=\"head\" markerWidth=\"8\" markerHeight=\"8\" refX=\"7\" refY=\"4\" orient=\"auto\">"
       "<path d=\"M0,0 L8,4 L0,8 z\" fill=\"#b22222\"/></marker></defs>\n";
  s += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"640\" fill=\"white\"/>\n";
  s += "<line x1=\"" + format_fixed(margin, 2) + "\" y1=\"320.00\" x2=\"" + format_fixed(size - margin, 2) +
       "\" y2=\"320.00\" stroke=\"#999\"/>\n";
  s += "<line x1=\"320.00\" y1=\"" + format_fixed(margin, 2) + "\" x2=\"320.00\" y2=\"" + format_fixed(size - margin, 2) +
       "\" stroke=\"#999\"/>\n";
  s += "<text x=\"320.00\" y=\"" + format_fixed(size - 20.0, 2) + "\" text-anchor=\"middle\">" +
       xml_escape(axis_label(0, bd.ratios_percent(0))) + "</text>\n";
  s += "<text x=\"20.00\" y=\"320.00\" text-anchor=\"middle\" transform=\"rotate(-90 20.00 320.00)\">" +
       xml_escape(axis_label(1, bd.ratios_percent(1))) + "</text>\n";
  for (const auto& p : bd.points) {
    const double r = 3.0 * std::sqrt(static_cast<double>(p.multiplicity));
    s += "<circle cx=\"" + px(p.score(0)) + "\" cy=\"" + py(p.score(1)) + "\" r=\"" + format_fixed(r, 2) +
         "\" fill=\"#4682b4\" fill-opacity=\"0.5\"/>\n";
  }
  for (const auto& a : bd.arrows) {
    const double ax = a.g(0) * arrow_scale, ay = a.g(1) * arrow_scale;
    s += "<line x1=\"320.00\" y1=\"320.00\" x2=\"" + px(ax) + "\" y2=\"" + py(ay) +
         "\" stroke=\"#b22222\" marker-end=\"url(#head)\"/>\n";
    s += "<text x=\"" + px(ax) + "\" y=\"" + py(ay) + "\" font-size=\"11\" fill=\"#b22222\">" +
         xml_escape(a.variable + "=" + a.level_label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IngestError("cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw IngestError("write to '" + path + "' failed");
}

struct BiplotPaths {
  std::string svg, scores, loadings;  ///< empty = skip
};

inline BiplotData biplot_export(const FactorModel& model, const VariableSchema& schema, const FactorData& data,
                                const BiplotPaths& paths) {
  BiplotData bd = biplot_data(model, schema, data);
  if (!paths.scores.empty()) write_text_file(paths.scores, scores_csv(bd));
  if (!paths.loadings.empty()) write_text_file(paths.loadings, loadings_csv(bd));
  if (!paths.svg.empty()) write_text_file(paths.svg, biplot_svg(bd));
  return bd;
}

}  // namespace grasscat

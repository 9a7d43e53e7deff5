#pragma once

// "Var=l", "Var>=l", "Var<l" conditions compiled to dummy-bit patterns.

#include <algorithm>
#include <string>
#include <vector>

#include "grasscat/errors.hpp"
#include "grasscat/factor.hpp"
#include "grasscat/grassmann.hpp"
#include "grasscat/schema.hpp"

namespace grasscat {

/// Ones at t1, zeros at t0, everything else free.
struct Pattern {
  StateMask ones = 0;
  StateMask zeros = 0;
  bool impossible = false;

  Pattern& operator&=(const Pattern& o) {
    ones |= o.ones;
    zeros |= o.zeros;
    impossible = impossible || o.impossible || (ones & zeros) != 0;
    return *this;
  }
  bool matches(StateMask m) const { return !impossible && (m & ones) == ones && (m & zeros) == 0; }
};

inline Pattern parse_condition(const VariableSchema& schema, const std::string& text) {
  std::string op;
  std::size_t pos = std::string::npos;
  for (const char* cand : {">=", "<", "="}) {
    pos = text.find(cand);
    if (pos != std::string::npos) {
      op = cand;
      break;
    }
  }
  if (op.empty()) throw RangeError("condition '" + text + "' must look like Var=l, Var>=l or Var<l");
  const std::string name = text.substr(0, pos);
  const std::string num = text.substr(pos + op.size());
  const int j = schema.index_of(name);
  if (j < 0) throw RangeError("condition '" + text + "': unknown variable '" + name + "'");
  std::size_t used = 0;
  int level = -1;
  try {
    level = std::stoi(num, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (num.empty() || used != num.size()) throw RangeError("condition '" + text + "': level must be an integer");
  const auto& v = schema.variable(static_cast<std::size_t>(j));
  const auto& blk = schema.block(static_cast<std::size_t>(j));
  if (level < 0 || level >= v.levels) {
    throw RangeError("condition '" + text + "': level " + std::to_string(level) + " outside 0.." + std::to_string(v.levels - 1));
  }
  auto bit = [&](int l) { return StateMask{1} << (blk.offset + l - 1); };  // dummy for level l >= 1
  const StateMask block = ((StateMask{1} << blk.size) - 1) << blk.offset;
  Pattern p;
  if (v.kind == VariableKind::Categorical) {
    if (op != "=") throw RangeError("condition '" + text + "': categorical variables only take '='");
    if (level == 0) {
      p.zeros = block;
    } else {
      p.ones = bit(level);
      p.zeros = block & ~bit(level);
    }
    return p;
  }
  if (op == ">=") {
    if (level > 0) p.ones = bit(level);
  } else if (op == "<") {
    if (level == 0) {
      p.impossible = true;
    } else {
      p.zeros = bit(level);
    }
  } else {
    if (level > 0) p.ones = bit(level);
    if (level + 1 < v.levels) p.zeros = bit(level + 1);
  }
  return p;
}

inline Pattern parse_conditions(const VariableSchema& schema, const std::vector<std::string>& texts) {
  Pattern p;
  for (const auto& t : texts) p &= parse_condition(schema, t);
  return p;
}

/// P(pattern) under a Grassmann model through the marginal parameter.
inline double pattern_mass(const GrassmannParams& g, const Pattern& p) {
  if (p.impossible) return 0.0;
  return clamp_probability(pattern_probability(g, mask_to_indices(p.ones), mask_to_indices(p.zeros)));
}

/// P(pattern) under any distribution given as weights over enumerated states.
inline double pattern_mass(const std::vector<StateMask>& states, const std::vector<double>& weights, const Pattern& p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (p.matches(states[i])) acc += weights[i];
  }
  return acc;
}

struct QueryResult {
  double joint = 0.0;   ///< P(query and given)
  double given = 0.0;   ///< P(given)
  double conditional = 0.0;
};

template <class MassFn>
QueryResult evaluate_query(const Pattern& query, const Pattern& given, MassFn&& mass) {
  Pattern both = query;
  both &= given;
  QueryResult r;
  r.joint = mass(both);
  r.given = mass(given);
  if (!(r.given > 0.0)) throw DegenerateError("conditioning event has probability " + std::to_string(r.given));
  r.conditional = r.joint / r.given;
  return r;
}

}  // namespace grasscat

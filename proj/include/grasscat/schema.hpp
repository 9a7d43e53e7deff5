#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grasscat/errors.hpp"
#include "grasscat/linalg.hpp"

namespace grasscat {

enum class VariableKind { Categorical, Ordinal };

inline std::string_view to_string(VariableKind k) {
  return k == VariableKind::Categorical ? "categorical" : "ordinal";
}

/// One observed variable. `levels` counts the base level, so a binary
/// variable is Categorical with levels = 2.
struct VariableDecl {
  std::string name;
  VariableKind kind = VariableKind::Categorical;
  int levels = 2;

  bool operator==(const VariableDecl&) const = default;
};

/// Contiguous range of dummy indices owned by one variable.
struct Block {
  int offset = 0;
  int size = 0;

  int end() const { return offset + size; }
  bool operator==(const Block&) const = default;
};

/// Ordered variable declarations and the dummy layout they induce. Blocks
/// follow declaration order; nothing is reordered.
class VariableSchema {
 public:
  VariableSchema() = default;

  explicit VariableSchema(std::vector<VariableDecl> variables) : variables_(std::move(variables)) {
    blocks_.reserve(variables_.size());
    int offset = 0;
    for (std::size_t j = 0; j < variables_.size(); ++j) {
      const auto& v = variables_[j];
      if (v.levels < 2) {
        throw SchemaError("variable '" + v.name + "' must have at least 2 levels, got " +
                          std::to_string(v.levels));
      }
      for (std::size_t i = 0; i < j; ++i) {
        if (!v.name.empty() && variables_[i].name == v.name) {
          throw SchemaError("duplicate variable name '" + v.name + "'");
        }
      }
      blocks_.push_back({offset, v.levels - 1});
      offset += v.levels - 1;
    }
    q_ = offset;
  }

  int q() const { return q_; }
  std::size_t size() const { return variables_.size(); }
  bool empty() const { return variables_.empty(); }

  const VariableDecl& variable(std::size_t j) const { return variables_.at(j); }
  const Block& block(std::size_t j) const { return blocks_.at(j); }
  std::span<const VariableDecl> variables() const { return variables_; }
  std::span<const Block> blocks() const { return blocks_; }

  /// Index of the named variable or -1.
  int index_of(std::string_view name) const {
    for (std::size_t j = 0; j < variables_.size(); ++j) {
      if (variables_[j].name == name) return static_cast<int>(j);
    }
    return -1;
  }

  /// Variable owning dummy index r.
  std::size_t variable_of(int r) const {
    for (std::size_t j = 0; j < blocks_.size(); ++j) {
      if (r >= blocks_[j].offset && r < blocks_[j].end()) return j;
    }
    throw RangeError("dummy index " + std::to_string(r) + " outside 0.." + std::to_string(q_ - 1));
  }

  /// Number of allowed dummy states, saturating at SIZE_MAX.
  std::size_t state_count() const {
    std::size_t n = 1;
    for (const auto& v : variables_) {
      const auto l = static_cast<std::size_t>(v.levels);
      if (n > std::numeric_limits<std::size_t>::max() / l) return std::numeric_limits<std::size_t>::max();
      n *= l;
    }
    return n;
  }

  bool binary_only() const {
    for (const auto& v : variables_) {
      if (v.levels != 2) return false;
    }
    return true;
  }

  bool operator==(const VariableSchema& o) const { return variables_ == o.variables_; }

 private:
  std::vector<VariableDecl> variables_;
  std::vector<Block> blocks_;
  int q_ = 0;
};

/// Length-q bit vector of dummy variables.
struct DummyState {
  std::vector<std::uint8_t> bits;

  DummyState() = default;
  explicit DummyState(std::vector<std::uint8_t> b) : bits(std::move(b)) {}

  static DummyState from_mask(StateMask mask, int q) {
    DummyState s;
    s.bits.resize(static_cast<std::size_t>(q));
    for (int r = 0; r < q; ++r) s.bits[static_cast<std::size_t>(r)] = (mask >> r) & 1U;
    return s;
  }

  int size() const { return static_cast<int>(bits.size()); }

  StateMask mask() const {
    if (bits.size() > static_cast<std::size_t>(kMaxMaskBits)) {
      throw RangeError("state of length " + std::to_string(bits.size()) + " exceeds mask width");
    }
    StateMask m = 0;
    for (std::size_t r = 0; r < bits.size(); ++r) {
      if (bits[r]) m |= StateMask{1} << r;
    }
    return m;
  }

  Vector as_vector() const {
    Vector v(static_cast<Eigen::Index>(bits.size()));
    for (std::size_t r = 0; r < bits.size(); ++r) v(static_cast<Eigen::Index>(r)) = bits[r];
    return v;
  }

  auto operator<=>(const DummyState&) const = default;
};

/// Per-variable integer levels in declaration order.
using Record = std::vector<int>;

inline DummyState encode_record(const VariableSchema& schema, const Record& rec) {
  if (rec.size() != schema.size()) {
    throw RangeError("record has " + std::to_string(rec.size()) + " values, schema declares " +
                     std::to_string(schema.size()));
  }
  DummyState s;
  s.bits.assign(static_cast<std::size_t>(schema.q()), 0);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& v = schema.variable(j);
    const auto& blk = schema.block(j);
    const int level = rec[j];
    if (level < 0 || level >= v.levels) {
      throw RangeError("variable '" + v.name + "': level " + std::to_string(level) + " outside 0.." +
                       std::to_string(v.levels - 1));
    }
    if (level == 0) continue;
    if (v.kind == VariableKind::Categorical) {
      s.bits[static_cast<std::size_t>(blk.offset + level - 1)] = 1;
    } else {
      for (int l = 0; l < level; ++l) s.bits[static_cast<std::size_t>(blk.offset + l)] = 1;
    }
  }
  return s;
}

/// Level encoded by one block, or -1 if the bit pattern is not allowed.
inline int decode_block(VariableKind kind, std::span<const std::uint8_t> bits) {
  int level = 0;
  if (kind == VariableKind::Categorical) {
    for (std::size_t l = 0; l < bits.size(); ++l) {
      if (bits[l] > 1) return -1;
      if (bits[l]) {
        if (level != 0) return -1;
        level = static_cast<int>(l) + 1;
      }
    }
    return level;
  }
  bool seen_zero = false;
  for (std::size_t l = 0; l < bits.size(); ++l) {
    if (bits[l] > 1) return -1;
    if (bits[l]) {
      if (seen_zero) return -1;
      ++level;
    } else {
      seen_zero = true;
    }
  }
  return level;
}

inline Record decode_state(const VariableSchema& schema, const DummyState& s) {
  if (s.size() != schema.q()) {
    throw InvalidStateError("state has " + std::to_string(s.size()) + " bits, schema has q=" +
                            std::to_string(schema.q()));
  }
  Record rec(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& blk = schema.block(j);
    const auto& v = schema.variable(j);
    const int level = decode_block(v.kind, std::span(s.bits).subspan(static_cast<std::size_t>(blk.offset),
                                                                   static_cast<std::size_t>(blk.size)));
    if (level < 0) {
      throw InvalidStateError("block of variable '" + v.name + "' (dummies " + std::to_string(blk.offset) + ".." +
                              std::to_string(blk.end() - 1) + ") violates the " +
                              std::string(v.kind == VariableKind::Categorical ? "one-hot" : "left-flushed") +
                              " pattern");
    }
    rec[j] = level;
  }
  return rec;
}

inline bool is_allowed(const VariableSchema& schema, const DummyState& s) {
  if (s.size() != schema.q()) return false;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& blk = schema.block(j);
    if (decode_block(schema.variable(j).kind,
                     std::span(s.bits).subspan(static_cast<std::size_t>(blk.offset),
                                               static_cast<std::size_t>(blk.size))) < 0) {
      return false;
    }
  }
  return true;
}

inline bool is_allowed_mask(const VariableSchema& schema, StateMask mask) {
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& blk = schema.block(j);
    const StateMask part = (mask >> blk.offset) & ((StateMask{1} << blk.size) - 1);
    if (schema.variable(j).kind == VariableKind::Categorical) {
      if (std::popcount(part) > 1) return false;
    } else if ((part & (part + 1)) != 0) {
      return false;
    }
  }
  return true;
}

/// Every allowed record in lexicographic order (first variable most
/// significant), as records.
inline std::vector<Record> enumerate_records(const VariableSchema& schema,
                                             std::size_t cap = EnumerationCaps{}.allowed_states) {
  const std::size_t n = schema.state_count();
  if (n > cap) {
    throw EnumerationError("schema has " + std::to_string(n) + " allowed states, cap is " + std::to_string(cap));
  }
  std::vector<Record> out;
  out.reserve(n);
  Record rec(schema.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(rec);
    for (std::size_t j = schema.size(); j-- > 0;) {
      if (++rec[j] < schema.variable(j).levels) break;
      rec[j] = 0;
    }
  }
  return out;
}

inline std::vector<DummyState> enumerate_allowed_states(const VariableSchema& schema,
                                                        std::size_t cap = EnumerationCaps{}.allowed_states) {
  std::vector<DummyState> out;
  for (const auto& rec : enumerate_records(schema, cap)) out.push_back(encode_record(schema, rec));
  return out;
}

inline std::vector<StateMask> enumerate_allowed_masks(const VariableSchema& schema,
                                                      std::size_t cap = EnumerationCaps{}.allowed_states) {
  if (schema.q() > kMaxMaskBits) throw EnumerationError("q exceeds mask width");
  std::vector<StateMask> out;
  for (const auto& s : enumerate_allowed_states(schema, cap)) out.push_back(s.mask());
  return out;
}

}  // namespace grasscat

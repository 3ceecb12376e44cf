#include "cadvlm/tokens.hpp"

#include <sstream>

#include "cadvlm/error.hpp"

namespace cadvlm {

int constraint_token(ConstraintType type) {
  return vocab::kConstraintMin + static_cast<int>(type);
}

std::optional<ConstraintType> constraint_from_token(int token) {
  if (token < vocab::kConstraintMin || token > vocab::kConstraintMax) return std::nullopt;
  return static_cast<ConstraintType>(token - vocab::kConstraintMin);
}

int kind_token(EntityKind kind) {
  switch (kind) {
    case EntityKind::Line: return vocab::kKindLine;
    case EntityKind::Arc: return vocab::kKindArc;
    case EntityKind::Circle: return vocab::kKindCircle;
  }
  return vocab::kPad;
}

std::optional<EntityKind> kind_from_token(int token) {
  switch (token) {
    case vocab::kKindLine: return EntityKind::Line;
    case vocab::kKindArc: return EntityKind::Arc;
    case vocab::kKindCircle: return EntityKind::Circle;
    default: return std::nullopt;
  }
}

std::string_view flag_name(DecodeFlag flag) {
  switch (flag) {
    case DecodeFlag::MalformedTail: return "MalformedTail";
    case DecodeFlag::DegenerateEntity: return "DegenerateEntity";
    case DecodeFlag::UnresolvedRef: return "UnresolvedRef";
    case DecodeFlag::UnknownType: return "UnknownType";
    case DecodeFlag::WrongArity: return "WrongArity";
  }
  return "?";
}

void append_entity_block(const Entity& e, std::vector<int>& out) {
  out.push_back(kind_token(e.kind));
  for (const auto& p : e.points) {
    out.push_back(p.qx);
    out.push_back(p.qy);
  }
}

TokenSeq encode_entities(std::span<const Entity> entities) {
  TokenSeq seq{{vocab::kBos}, Stream::Primitive};
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (auto rule = entity_violation(entities[i])) {
      throw Error(Errc::InvalidSketch,
                  to_string(Violation{*rule, static_cast<int>(i)}) + " cannot be encoded");
    }
    append_entity_block(entities[i], seq.tokens);
    seq.tokens.push_back(vocab::kEntSep);
  }
  seq.tokens.push_back(vocab::kEos);
  return seq;
}

TokenSeq encode_primitives(const Sketch& s) { return encode_entities(s.entities); }

namespace {

// Cursor over an untrusted token list.
class Reader {
 public:
  explicit Reader(std::span<const int> t) : t_(t) {}

  bool done() const { return pos_ >= t_.size(); }
  int peek() const { return t_[pos_]; }
  int next() { return t_[pos_++]; }

  // Reads a KIND token plus its coordinates. Returns nullopt (cursor state
  // unspecified) if the block is truncated or contains a non-coordinate.
  std::optional<Entity> read_block() {
    if (done()) return std::nullopt;
    auto kind = kind_from_token(next());
    if (!kind) return std::nullopt;
    Entity e{*kind, {}};
    for (int i = 0; i < point_count(*kind); ++i) {
      int xy[2];
      for (int& v : xy) {
        if (done()) return std::nullopt;
        v = next();
        if (v < vocab::kCoordMin || v > vocab::kCoordMax) return std::nullopt;
      }
      e.points.push_back({xy[0], xy[1]});
    }
    return e;
  }

 private:
  std::span<const int> t_;
  std::size_t pos_ = 0;
};

}  // namespace

PrimitiveDecode decode_primitives(const TokenSeq& t) {
  PrimitiveDecode out;
  Reader r(t.tokens);
  if (!r.done() && r.peek() == vocab::kBos) r.next();
  while (true) {
    if (r.done()) {
      out.flags.push_back(DecodeFlag::MalformedTail);
      break;
    }
    if (r.peek() == vocab::kEos) break;
    auto e = r.read_block();
    if (!e || r.done() || r.next() != vocab::kEntSep) {
      out.flags.push_back(DecodeFlag::MalformedTail);
      break;
    }
    if (entity_violation(*e)) {
      out.flags.push_back(DecodeFlag::DegenerateEntity);
      continue;
    }
    out.sketch.entities.push_back(std::move(*e));
  }
  return out;
}

TokenSeq encode_constraints(const Sketch& s) {
  for (std::size_t i = 0; i < s.entities.size(); ++i) {
    if (auto rule = entity_violation(s.entities[i])) {
      throw Error(Errc::InvalidSketch, to_string(Violation{*rule, static_cast<int>(i)}));
    }
  }
  const int m = static_cast<int>(s.entities.size());
  TokenSeq seq{{vocab::kBos}, Stream::Constraint};
  for (std::size_t j = 0; j < s.constraints.size(); ++j) {
    const auto& c = s.constraints[j];
    for (int ref : c.refs) {
      if (ref < 0 || ref >= m) {
        throw Error(Errc::DanglingRef, "constraint " + std::to_string(j) + " references entity " +
                                           std::to_string(ref) + " of " + std::to_string(m));
      }
      append_entity_block(s.entities[static_cast<std::size_t>(ref)], seq.tokens);
    }
    seq.tokens.push_back(constraint_token(c.type));
    seq.tokens.push_back(vocab::kConSep);
  }
  seq.tokens.push_back(vocab::kEos);
  return seq;
}

ConstraintDecode decode_constraints(const TokenSeq& t, const Sketch& s) {
  std::vector<Entity> canonical;
  canonical.reserve(s.entities.size());
  for (const auto& e : s.entities) canonical.push_back(canonicalize(e));
  auto resolve = [&canonical](const Entity& block) -> int {
    const Entity c = canonicalize(block);
    for (std::size_t i = 0; i < canonical.size(); ++i) {
      if (canonical[i] == c) return static_cast<int>(i);
    }
    return -1;
  };

  ConstraintDecode out;
  Reader r(t.tokens);
  if (!r.done() && r.peek() == vocab::kBos) r.next();
  while (true) {
    if (r.done()) {
      out.flags.push_back(DecodeFlag::MalformedTail);
      break;
    }
    if (r.peek() == vocab::kEos) break;

    std::vector<int> refs;
    bool unresolved = false;
    bool broken = false;
    while (!r.done() && kind_from_token(r.peek())) {
      auto block = r.read_block();
      if (!block) {
        broken = true;
        break;
      }
      const int idx = resolve(*block);
      if (idx < 0) unresolved = true;
      refs.push_back(idx);
    }
    if (broken || r.done() || refs.empty()) {
      out.flags.push_back(DecodeFlag::MalformedTail);
      break;
    }
    const int type_token = r.next();
    if (r.done() || r.next() != vocab::kConSep) {
      out.flags.push_back(DecodeFlag::MalformedTail);
      break;
    }
    auto type = constraint_from_token(type_token);
    if (!type) {
      out.flags.push_back(DecodeFlag::UnknownType);
      continue;
    }
    if (unresolved) {
      out.flags.push_back(DecodeFlag::UnresolvedRef);
      continue;
    }
    if (static_cast<int>(refs.size()) != constraint_arity(*type)) {
      out.flags.push_back(DecodeFlag::WrongArity);
      continue;
    }
    out.constraints.push_back({*type, std::move(refs)});
  }
  return out;
}

std::string format_tokens(std::span<const int> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += std::to_string(tokens[i]);
  }
  return out;
}

std::vector<int> parse_tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<int> out;
  long long v;
  while (in >> v) out.push_back(static_cast<int>(v));
  if (!in.eof()) throw Error(Errc::ParseError, "non-integer token in \"" + line + "\"");
  return out;
}

}  // namespace cadvlm

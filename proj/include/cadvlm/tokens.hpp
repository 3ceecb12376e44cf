#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cadvlm/sketch.hpp"

namespace cadvlm {

// Token alphabet. Coordinates occupy 1..64 and constraint types 65..77; the
// control tokens sit outside both ranges so parsing never has to guess.
namespace vocab {
inline constexpr int kPad = 0;
inline constexpr int kCoordMin = 1;
inline constexpr int kCoordMax = 64;
inline constexpr int kConstraintMin = 65;  // Coincident
inline constexpr int kConstraintMax = 77;  // Vertical
inline constexpr int kBos = 78;
inline constexpr int kEos = 79;
inline constexpr int kEntSep = 80;
inline constexpr int kConSep = 81;
inline constexpr int kKindLine = 82;
inline constexpr int kKindArc = 83;
inline constexpr int kKindCircle = 84;
inline constexpr int kSize = 85;
}  // namespace vocab

int constraint_token(ConstraintType type);
std::optional<ConstraintType> constraint_from_token(int token);
int kind_token(EntityKind kind);
std::optional<EntityKind> kind_from_token(int token);

enum class Stream { Primitive, Constraint };

struct TokenSeq {
  std::vector<int> tokens;
  Stream stream = Stream::Primitive;

  bool operator==(const TokenSeq&) const = default;
};

enum class DecodeFlag {
  MalformedTail,     // structure broke; everything after the last good item dropped
  DegenerateEntity,  // well-formed entity that fails geometric validity; skipped
  UnresolvedRef,     // constraint block matches no entity; constraint dropped
  UnknownType,       // constraint type token outside 65..77; constraint dropped
  WrongArity,        // constraint with a ref count its type does not allow; dropped
};

std::string_view flag_name(DecodeFlag flag);

struct PrimitiveDecode {
  Sketch sketch;  // entities only
  std::vector<DecodeFlag> flags;
};

struct ConstraintDecode {
  std::vector<Constraint> constraints;
  std::vector<DecodeFlag> flags;
};

// KIND token followed by the (qx, qy) pairs of every point.
void append_entity_block(const Entity& e, std::vector<int>& out);

// BOS, {KIND, coords..., ENT_SEP}*, EOS. Entity-level validity is checked;
// an empty entity list encodes to [BOS, EOS]. Throws Errc::InvalidSketch.
TokenSeq encode_entities(std::span<const Entity> entities);
TokenSeq encode_primitives(const Sketch& s);

// Total function: never throws, reports problems as flags.
PrimitiveDecode decode_primitives(const TokenSeq& t);

// BOS, {block(ref0), block(ref1)..., TYPE, CON_SEP}*, EOS.
// Throws Errc::DanglingRef / Errc::InvalidSketch.
TokenSeq encode_constraints(const Sketch& s);

// Blocks resolve to the lowest entity index with equal canonical tokens.
ConstraintDecode decode_constraints(const TokenSeq& t, const Sketch& s);

// Whitespace-separated decimal integers, one sequence per line.
std::string format_tokens(std::span<const int> tokens);
std::vector<int> parse_tokens(const std::string& line);

}  // namespace cadvlm

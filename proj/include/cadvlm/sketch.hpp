#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cadvlm {

inline constexpr int kQuantMin = 1;
inline constexpr int kQuantMax = 64;
inline constexpr int kQuantLevels = kQuantMax - kQuantMin + 1;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// A coordinate pair on the [1,64]^2 token grid.
struct QPoint {
  int qx = 0;
  int qy = 0;

  auto operator<=>(const QPoint&) const = default;
};

enum class EntityKind { Line, Arc, Circle };

// Line: start, end. Arc: start, mid (on curve), end. Circle: four points
// spaced a quarter turn apart on the circumference.
constexpr int point_count(EntityKind kind) {
  switch (kind) {
    case EntityKind::Line: return 2;
    case EntityKind::Arc: return 3;
    case EntityKind::Circle: return 4;
  }
  return 0;
}

std::string_view kind_name(EntityKind kind);
std::optional<EntityKind> kind_from_name(std::string_view name);

struct Entity {
  EntityKind kind = EntityKind::Line;
  std::vector<QPoint> points;

  bool operator==(const Entity&) const = default;
  auto operator<=>(const Entity&) const = default;
};

enum class ConstraintType {
  Coincident,
  Concentric,
  Equal,
  Fix,
  Horizontal,
  Midpoint,
  Normal,
  Offset,
  Parallel,
  Perpendicular,
  Quadrant,
  Tangent,
  Vertical,
};

inline constexpr int kConstraintTypeCount = 13;

// Horizontal, Vertical and Fix act on a single entity; the rest relate two.
constexpr int constraint_arity(ConstraintType type) {
  switch (type) {
    case ConstraintType::Horizontal:
    case ConstraintType::Vertical:
    case ConstraintType::Fix:
      return 1;
    default:
      return 2;
  }
}

std::string_view constraint_name(ConstraintType type);
std::optional<ConstraintType> constraint_from_name(std::string_view name);

struct Constraint {
  ConstraintType type = ConstraintType::Coincident;
  std::vector<int> refs;  // entity indices

  bool operator==(const Constraint&) const = default;
  auto operator<=>(const Constraint&) const = default;
};

struct Sketch {
  std::vector<Entity> entities;
  std::vector<Constraint> constraints;

  bool operator==(const Sketch&) const = default;
};

// ---------------------------------------------------------------------------
// Continuous geometry, normalization and quantization

struct RawEntity {
  EntityKind kind = EntityKind::Line;
  std::vector<Point> points;
};

// Maps all points into the unit box: bounding box centred at the origin,
// longer side exactly 1, aspect ratio preserved.
// Throws Errc::EmptySketch / Errc::DegenerateExtent.
std::vector<RawEntity> normalize(std::span<const RawEntity> raw);

// q = 1 + round_half_up((x + 0.5) * 63). Throws Errc::OutOfBox beyond 1e-9.
QPoint quantize(Point p);
// Inverse grid map. Throws Errc::TokenOutOfRange.
Point dequantize(QPoint q);

Entity quantize(const RawEntity& e);
RawEntity dequantize(const Entity& e);

// Lines: endpoints sorted. Arcs: start/end sorted, mid left in place.
// Circles: all four points sorted.
Entity canonicalize(const Entity& e);

// ---------------------------------------------------------------------------
// Validation

enum class Rule {
  EmptySketch,
  WrongPointCount,
  TokenOutOfRange,
  DegenerateLine,
  CollinearArc,
  DegenerateCircle,
  WrongArity,
  DanglingRef,
};

std::string_view rule_name(Rule rule);

struct Violation {
  Rule rule;
  int index = -1;  // entity index, or constraint index for WrongArity/DanglingRef

  bool operator==(const Violation&) const = default;
};

std::string to_string(const Violation& v);  // e.g. "DegenerateLine@0"

// Entity-level rules only (point count, token range, degeneracy).
std::optional<Rule> entity_violation(const Entity& e);

// Empty result iff every sketch invariant holds.
std::vector<Violation> validate(const Sketch& s);

// ---------------------------------------------------------------------------
// JSON line format:
// {"entities":[{"kind":"line","pts":[[qx,qy],...]}],
//  "constraints":[{"type":"coincident","refs":[0,1]}]}

nlohmann::json to_json(const Sketch& s);
nlohmann::json to_json(const Entity& e);
// Structural parse only; throws Errc::ParseError on schema problems.
Sketch sketch_from_json(const nlohmann::json& j);

// Stable 64-bit FNV-1a over the canonical token content of a sketch.
std::uint64_t content_hash(const Sketch& s);

}  // namespace cadvlm

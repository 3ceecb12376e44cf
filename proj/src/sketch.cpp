#include "cadvlm/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cadvlm/error.hpp"

namespace cadvlm {

namespace {

constexpr double kBoxTolerance = 1e-9;

constexpr std::array<std::string_view, kConstraintTypeCount> kConstraintNames = {
    "coincident", "concentric", "equal",         "fix",      "horizontal",
    "midpoint",   "normal",     "offset",        "parallel", "perpendicular",
    "quadrant",   "tangent",    "vertical"};

long long cross(QPoint o, QPoint a, QPoint b) {
  return static_cast<long long>(a.qx - o.qx) * (b.qy - o.qy) -
         static_cast<long long>(a.qy - o.qy) * (b.qx - o.qx);
}

int quantize_axis(double v) {
  if (!std::isfinite(v) || v < -0.5 - kBoxTolerance || v > 0.5 + kBoxTolerance) {
    throw Error(Errc::OutOfBox, "coordinate " + std::to_string(v) + " outside [-0.5, 0.5]");
  }
  // Near zero, 31.5 + 63v rounds to 32 for v >= 0 and to 31 below; the sum
  // v + 0.5 would lose v's sign there.
  if (std::abs(v) < 0x1p-12) return v < 0.0 ? 32 : 33;
  // Otherwise the 64-bit mantissa holds (v + 0.5) * 63 exactly, so ties
  // round up exactly instead of wherever double rounding lands them.
  const long double clamped = std::clamp(v, -0.5, 0.5);
  return kQuantMin + static_cast<int>(std::floor((clamped + 0.5L) * (kQuantLevels - 1) + 0.5L));
}

double dequantize_axis(int q) {
  return static_cast<double>(q - kQuantMin) / (kQuantLevels - 1) - 0.5;
}

bool in_range(QPoint p) {
  return p.qx >= kQuantMin && p.qx <= kQuantMax && p.qy >= kQuantMin && p.qy <= kQuantMax;
}

}  // namespace

std::string_view kind_name(EntityKind kind) {
  switch (kind) {
    case EntityKind::Line: return "line";
    case EntityKind::Arc: return "arc";
    case EntityKind::Circle: return "circle";
  }
  return "?";
}

std::optional<EntityKind> kind_from_name(std::string_view name) {
  if (name == "line") return EntityKind::Line;
  if (name == "arc") return EntityKind::Arc;
  if (name == "circle") return EntityKind::Circle;
  return std::nullopt;
}

std::string_view constraint_name(ConstraintType type) {
  return kConstraintNames[static_cast<std::size_t>(type)];
}

std::optional<ConstraintType> constraint_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kConstraintNames.size(); ++i) {
    if (kConstraintNames[i] == name) return static_cast<ConstraintType>(i);
  }
  return std::nullopt;
}

std::vector<RawEntity> normalize(std::span<const RawEntity> raw) {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  std::size_t n_points = 0;
  for (const auto& e : raw) {
    for (const auto& p : e.points) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
      ++n_points;
    }
  }
  if (raw.empty() || n_points == 0) throw Error(Errc::EmptySketch, "no entities to normalize");
  const double extent = std::max(max_x - min_x, max_y - min_y);
  if (!(extent > 0.0) || !std::isfinite(extent)) {
    throw Error(Errc::DegenerateExtent, "all points coincide");
  }
  const double cx = 0.5 * (min_x + max_x);
  const double cy = 0.5 * (min_y + max_y);

  std::vector<RawEntity> out(raw.begin(), raw.end());
  for (auto& e : out) {
    for (auto& p : e.points) {
      p.x = std::clamp((p.x - cx) / extent, -0.5, 0.5);
      p.y = std::clamp((p.y - cy) / extent, -0.5, 0.5);
    }
  }
  return out;
}

QPoint quantize(Point p) { return {quantize_axis(p.x), quantize_axis(p.y)}; }

Point dequantize(QPoint q) {
  if (!in_range(q)) {
    throw Error(Errc::TokenOutOfRange,
                "token (" + std::to_string(q.qx) + "," + std::to_string(q.qy) + ") outside [1,64]");
  }
  return {dequantize_axis(q.qx), dequantize_axis(q.qy)};
}

Entity quantize(const RawEntity& e) {
  Entity out{e.kind, {}};
  out.points.reserve(e.points.size());
  for (const auto& p : e.points) out.points.push_back(quantize(p));
  return out;
}

RawEntity dequantize(const Entity& e) {
  RawEntity out{e.kind, {}};
  out.points.reserve(e.points.size());
  for (const auto& q : e.points) out.points.push_back(dequantize(q));
  return out;
}

Entity canonicalize(const Entity& e) {
  Entity out = e;
  auto& pts = out.points;
  switch (e.kind) {
    case EntityKind::Line:
    case EntityKind::Circle:
      std::sort(pts.begin(), pts.end());
      break;
    case EntityKind::Arc:
      if (pts.size() == 3 && pts[2] < pts[0]) std::swap(pts[0], pts[2]);
      break;
  }
  return out;
}

std::string_view rule_name(Rule rule) {
  switch (rule) {
    case Rule::EmptySketch: return "EmptySketch";
    case Rule::WrongPointCount: return "WrongPointCount";
    case Rule::TokenOutOfRange: return "TokenOutOfRange";
    case Rule::DegenerateLine: return "DegenerateLine";
    case Rule::CollinearArc: return "CollinearArc";
    case Rule::DegenerateCircle: return "DegenerateCircle";
    case Rule::WrongArity: return "WrongArity";
    case Rule::DanglingRef: return "DanglingRef";
  }
  return "?";
}

std::string to_string(const Violation& v) {
  return std::string(rule_name(v.rule)) + "@" + std::to_string(v.index);
}

std::optional<Rule> entity_violation(const Entity& e) {
  const auto& pts = e.points;
  if (static_cast<int>(pts.size()) != point_count(e.kind)) return Rule::WrongPointCount;
  for (const auto& p : pts) {
    if (!in_range(p)) return Rule::TokenOutOfRange;
  }
  switch (e.kind) {
    case EntityKind::Line:
      if (pts[0] == pts[1]) return Rule::DegenerateLine;
      break;
    case EntityKind::Arc:
      if (cross(pts[0], pts[1], pts[2]) == 0) return Rule::CollinearArc;
      break;
    case EntityKind::Circle: {
      auto sorted = pts;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        return Rule::DegenerateCircle;
      }
      // Any three of four distinct points on a circle are non-collinear.
      if (cross(pts[0], pts[1], pts[2]) == 0 || cross(pts[1], pts[2], pts[3]) == 0) {
        return Rule::DegenerateCircle;
      }
      break;
    }
  }
  return std::nullopt;
}

std::vector<Violation> validate(const Sketch& s) {
  std::vector<Violation> out;
  if (s.entities.empty()) out.push_back({Rule::EmptySketch, 0});
  for (std::size_t i = 0; i < s.entities.size(); ++i) {
    if (auto rule = entity_violation(s.entities[i])) out.push_back({*rule, static_cast<int>(i)});
  }
  const int m = static_cast<int>(s.entities.size());
  for (std::size_t j = 0; j < s.constraints.size(); ++j) {
    const auto& c = s.constraints[j];
    const int idx = static_cast<int>(j);
    if (static_cast<int>(c.refs.size()) != constraint_arity(c.type)) {
      out.push_back({Rule::WrongArity, idx});
    }
    if (std::any_of(c.refs.begin(), c.refs.end(), [m](int r) { return r < 0 || r >= m; })) {
      out.push_back({Rule::DanglingRef, idx});
    }
  }
  return out;
}

nlohmann::json to_json(const Entity& e) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : e.points) pts.push_back({p.qx, p.qy});
  return {{"kind", kind_name(e.kind)}, {"pts", std::move(pts)}};
}

nlohmann::json to_json(const Sketch& s) {
  nlohmann::json ents = nlohmann::json::array();
  for (const auto& e : s.entities) ents.push_back(to_json(e));
  nlohmann::json cons = nlohmann::json::array();
  for (const auto& c : s.constraints) {
    cons.push_back({{"type", constraint_name(c.type)}, {"refs", c.refs}});
  }
  return {{"entities", std::move(ents)}, {"constraints", std::move(cons)}};
}

Sketch sketch_from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& what) { throw Error(Errc::ParseError, what); };
  if (!j.is_object() || !j.contains("entities") || !j["entities"].is_array()) {
    fail("expected object with an \"entities\" array");
  }
  Sketch s;
  for (const auto& je : j["entities"]) {
    if (!je.is_object() || !je.contains("kind") || !je["kind"].is_string() ||
        !je.contains("pts") || !je["pts"].is_array()) {
      fail("entity needs \"kind\" and \"pts\"");
    }
    auto kind = kind_from_name(je["kind"].get<std::string>());
    if (!kind) fail("unknown entity kind " + je["kind"].dump());
    Entity e{*kind, {}};
    for (const auto& jp : je["pts"]) {
      if (!jp.is_array() || jp.size() != 2 || !jp[0].is_number_integer() ||
          !jp[1].is_number_integer()) {
        fail("point must be [qx, qy] integers");
      }
      e.points.push_back({jp[0].get<int>(), jp[1].get<int>()});
    }
    s.entities.push_back(std::move(e));
  }
  if (j.contains("constraints")) {
    if (!j["constraints"].is_array()) fail("\"constraints\" must be an array");
    for (const auto& jc : j["constraints"]) {
      if (!jc.is_object() || !jc.contains("type") || !jc["type"].is_string() ||
          !jc.contains("refs") || !jc["refs"].is_array()) {
        fail("constraint needs \"type\" and \"refs\"");
      }
      auto type = constraint_from_name(jc["type"].get<std::string>());
      if (!type) fail("unknown constraint type " + jc["type"].dump());
      Constraint c{*type, {}};
      for (const auto& r : jc["refs"]) {
        if (!r.is_number_integer()) fail("constraint refs must be integers");
        c.refs.push_back(r.get<int>());
      }
      s.constraints.push_back(std::move(c));
    }
  }
  return s;
}

std::uint64_t content_hash(const Sketch& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::int64_t v) {
    for (int b = 0; b < 4; ++b) {
      h ^= static_cast<std::uint64_t>((v >> (8 * b)) & 0xff);
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : s.entities) {
    const Entity c = canonicalize(e);
    mix(100 + static_cast<int>(c.kind));
    for (const auto& p : c.points) {
      mix(p.qx);
      mix(p.qy);
    }
  }
  mix(-1);
  for (const auto& c : s.constraints) {
    mix(200 + static_cast<int>(c.type));
    for (int r : c.refs) mix(r);
  }
  return h;
}

}  // namespace cadvlm

#include "cadvlm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "cadvlm/error.hpp"

namespace cadvlm {

namespace {

constexpr std::uint64_t kBucketTotal = 670246;
constexpr std::uint64_t kTrainBuckets = 626236;
constexpr std::uint64_t kValBuckets = 22031;

constexpr int kMaxStreamTokens = 256;
constexpr int kMaxEntities = 10;

Sketch canonical_form(const Sketch& s) {
  Sketch c = s;
  for (auto& e : c.entities) e = canonicalize(e);
  return c;
}

// Detects exact duplicates under canonical-token equality.
class DedupSet {
 public:
  bool insert(const Sketch& s) {
    const Sketch c = canonical_form(s);
    auto& bucket = seen_[content_hash(s)];
    for (const auto& other : bucket) {
      if (other == c) return false;
    }
    bucket.push_back(c);
    return true;
  }

 private:
  std::unordered_map<std::uint64_t, std::vector<Sketch>> seen_;
};

Corpus make_corpus(std::vector<Sketch> sketches, Split split, const std::string& source) {
  Corpus c;
  c.sketches = std::move(sketches);
  c.split = split;
  c.source = source;
  c.content_hash = corpus_hash(c.sketches);
  return c;
}

// ---------------------------------------------------------------------------
// Synthetic sketches are built on an integer lattice, then normalized and
// quantized like any ingested sketch.

struct Builder {
  std::vector<RawEntity> entities;
  std::vector<Constraint> constraints;

  int line(Point a, Point b) {
    entities.push_back({EntityKind::Line, {a, b}});
    return static_cast<int>(entities.size()) - 1;
  }
  int arc(Point a, Point mid, Point b) {
    entities.push_back({EntityKind::Arc, {a, mid, b}});
    return static_cast<int>(entities.size()) - 1;
  }
  int circle(Point c, double r) {
    entities.push_back({EntityKind::Circle,
                        {{c.x + r, c.y}, {c.x, c.y + r}, {c.x - r, c.y}, {c.x, c.y - r}}});
    return static_cast<int>(entities.size()) - 1;
  }
  void add(ConstraintType t, std::vector<int> refs) { constraints.push_back({t, std::move(refs)}); }

  int size() const { return static_cast<int>(entities.size()); }
};

// Closed polyline through the vertices; every edge a line.
std::vector<int> polygon_loop(Builder& b, const std::vector<Point>& v) {
  std::vector<int> ids;
  for (std::size_t i = 0; i < v.size(); ++i) ids.push_back(b.line(v[i], v[(i + 1) % v.size()]));
  return ids;
}

void loop_constraints(Builder& b, const std::vector<int>& loop) {
  const std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    b.add(ConstraintType::Coincident, {loop[i], loop[(i + 1) % n]});
  }
}

void orientation_constraints(Builder& b, const std::vector<int>& ids) {
  for (int id : ids) {
    const auto& e = b.entities[static_cast<std::size_t>(id)];
    if (e.kind != EntityKind::Line) continue;
    if (e.points[0].y == e.points[1].y) b.add(ConstraintType::Horizontal, {id});
    if (e.points[0].x == e.points[1].x) b.add(ConstraintType::Vertical, {id});
  }
}

struct Region {
  double x0, y0, x1, y1;
};

// Hole patterns found on machined plates: a centred hole (optionally with a
// concentric counterbore), a mirrored pair, a four-corner set or a row of
// three. Members of a pattern share a radius.
void add_holes(Builder& b, Rng& rng, const Region& region, int budget) {
  if (budget <= 0) return;
  const double w = region.x1 - region.x0;
  const double h = region.y1 - region.y0;
  const Point c{(region.x0 + region.x1) / 2, (region.y0 + region.y1) / 2};
  static constexpr double kRadii[] = {0.5, 0.75, 1.0, 1.25};
  const double r = kRadii[rng.below(4)];
  const double inset = r + 0.5 * static_cast<double>(rng.uniform_int(1, 2));
  auto pattern = [&](const std::vector<Point>& centres) {
    if (static_cast<int>(centres.size()) > budget) return;
    for (const auto& p : centres) {
      if (p.x - r < region.x0 || p.x + r > region.x1 || p.y - r < region.y0 || p.y + r > region.y1) return;
    }
    for (std::size_t i = 0; i < centres.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (std::hypot(centres[i].x - centres[j].x, centres[i].y - centres[j].y) < 2 * r + 0.5) return;
      }
    }
    const int first = b.size();
    for (const auto& p : centres) b.circle(p, r);
    for (int i = first + 1; i < b.size(); ++i) b.add(ConstraintType::Equal, {first, i});
  };
  switch (rng.uniform_int(0, 4)) {
    case 0:
      break;
    case 1: {
      const double big = std::min({rng.uniform_int(3, 6) * 0.5, w / 2 - 0.5, h / 2 - 0.5});
      if (big < 1.0) break;
      const int outer = b.circle(c, big);
      if (budget >= 2 && rng.bernoulli(0.5)) {
        const int inner = b.circle(c, big / 2);
        b.add(ConstraintType::Concentric, {outer, inner});
      }
      break;
    }
    case 2:
      pattern({{region.x0 + inset, c.y}, {region.x1 - inset, c.y}});
      break;
    case 3:
      pattern({{region.x0 + inset, region.y0 + inset},
               {region.x1 - inset, region.y0 + inset},
               {region.x1 - inset, region.y1 - inset},
               {region.x0 + inset, region.y1 - inset}});
      break;
    default: {
      const double step = std::floor(w / 4 * 2) / 2;
      pattern({{c.x - step, c.y}, c, {c.x + step, c.y}});
      break;
    }
  }
}

void outer_profile(Builder& b, Rng& rng) {
  const int kind = rng.uniform_int(0, 6);
  const double w = rng.uniform_int(3, 12);
  const double h = rng.uniform_int(3, 12);
  switch (kind) {
    case 0: {  // rectangle
      auto loop = polygon_loop(b, {{0, 0}, {w, 0}, {w, h}, {0, h}});
      loop_constraints(b, loop);
      orientation_constraints(b, loop);
      b.add(ConstraintType::Parallel, {loop[0], loop[2]});
      b.add(ConstraintType::Perpendicular, {loop[0], loop[1]});
      add_holes(b, rng, {0, 0, w, h}, kMaxEntities - b.size());
      break;
    }
    case 1: {  // L-profile
      const double cw = rng.uniform_int(1, static_cast<int>(w) - 1);
      const double ch = rng.uniform_int(1, static_cast<int>(h) - 1);
      auto loop = polygon_loop(b, {{0, 0}, {w, 0}, {w, ch}, {cw, ch}, {cw, h}, {0, h}});
      loop_constraints(b, loop);
      orientation_constraints(b, loop);
      add_holes(b, rng, {0, 0, w, ch}, kMaxEntities - b.size());
      break;
    }
    case 2: {  // triangle or trapezoid
      if (rng.bernoulli(0.5)) {
        const double apex = rng.uniform_int(0, static_cast<int>(w));
        auto loop = polygon_loop(b, {{0, 0}, {w, 0}, {apex, h}});
        loop_constraints(b, loop);
        orientation_constraints(b, loop);
      } else {
        const double inset = rng.uniform_int(1, std::max(1, static_cast<int>(w) / 2 - 1));
        auto loop = polygon_loop(b, {{0, 0}, {w, 0}, {w - inset, h}, {inset, h}});
        loop_constraints(b, loop);
        orientation_constraints(b, loop);
        b.add(ConstraintType::Parallel, {loop[0], loop[2]});
      }
      break;
    }
    case 3: {  // slot: two lines closed by semicircular arcs
      const double r = std::floor(h / 2);
      const int bottom = b.line({0, 0}, {w, 0});
      const int right = b.arc({w, 0}, {w + r, r}, {w, 2 * r});
      const int top = b.line({w, 2 * r}, {0, 2 * r});
      const int left = b.arc({0, 2 * r}, {-r, r}, {0, 0});
      loop_constraints(b, {bottom, right, top, left});
      b.add(ConstraintType::Horizontal, {bottom});
      b.add(ConstraintType::Horizontal, {top});
      b.add(ConstraintType::Tangent, {bottom, right});
      b.add(ConstraintType::Tangent, {top, left});
      b.add(ConstraintType::Equal, {right, left});
      if (r >= 2) add_holes(b, rng, {0, 0, w, 2 * r}, kMaxEntities - b.size());
      break;
    }
    case 4: {  // rectangle with one side bulged into an arc
      const double bulge = rng.bernoulli(0.5) ? h / 2 : std::max(1.0, std::floor(h / 4));
      const int bottom = b.line({0, 0}, {w, 0});
      const int right = b.arc({w, 0}, {w + bulge, h / 2}, {w, h});
      const int top = b.line({w, h}, {0, h});
      const int left = b.line({0, h}, {0, 0});
      loop_constraints(b, {bottom, right, top, left});
      orientation_constraints(b, {bottom, top, left});
      b.add(ConstraintType::Parallel, {bottom, top});
      add_holes(b, rng, {0, 0, w, h}, kMaxEntities - b.size());
      break;
    }
    case 5: {  // rectangle with filleted corners
      const double f = std::min<double>(rng.uniform_int(1, 2), std::floor((std::min(w, h) - 1) / 2));
      const double d = f * (1 - std::numbers::sqrt2 / 2);
      const int bottom = b.line({f, 0}, {w - f, 0});
      const int c1 = b.arc({w - f, 0}, {w - d, d}, {w, f});
      const int right = b.line({w, f}, {w, h - f});
      const int c2 = b.arc({w, h - f}, {w - d, h - d}, {w - f, h});
      const int top = b.line({w - f, h}, {f, h});
      const int c3 = b.arc({f, h}, {d, h - d}, {0, h - f});
      const int left = b.line({0, h - f}, {0, f});
      const int c4 = b.arc({0, f}, {d, d}, {f, 0});
      const std::vector<int> loop{bottom, c1, right, c2, top, c3, left, c4};
      loop_constraints(b, loop);
      orientation_constraints(b, {bottom, right, top, left});
      for (std::size_t i = 0; i < loop.size(); ++i) b.add(ConstraintType::Tangent, {loop[i], loop[(i + 1) % loop.size()]});
      for (int c : {c2, c3, c4}) b.add(ConstraintType::Equal, {c1, c});
      add_holes(b, rng, {f, f, w - f, h - f}, kMaxEntities - b.size());
      break;
    }
    default: {  // loose circles, at least two
      const double r = rng.uniform_int(1, 3);
      const int outer = b.circle({0, 0}, r + 1);
      if (rng.bernoulli(0.5)) {
        const int inner = b.circle({0, 0}, r);
        b.add(ConstraintType::Concentric, {outer, inner});
      } else {
        const double dx = 2 * r + 2 + rng.uniform_int(0, 3);
        const int second = b.circle({dx, 0}, r + 1);
        b.add(ConstraintType::Equal, {outer, second});
        if (rng.bernoulli(0.5)) {
          const int bridge = b.line({0, r + 1}, {dx, r + 1});
          b.add(ConstraintType::Tangent, {outer, bridge});
          b.add(ConstraintType::Tangent, {second, bridge});
          b.add(ConstraintType::Horizontal, {bridge});
        }
      }
      break;
    }
  }
}

std::optional<Sketch> finish(const Builder& b) {
  if (b.size() < 2 || b.size() > kMaxEntities) return std::nullopt;
  Sketch s;
  for (const auto& e : normalize(b.entities)) s.entities.push_back(quantize(e));
  for (std::size_t i = 0; i < s.entities.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (canonicalize(s.entities[i]) == canonicalize(s.entities[j])) return std::nullopt;
    }
  }
  s.constraints = b.constraints;
  if (!validate(s).empty()) return std::nullopt;
  while (!s.constraints.empty() &&
         static_cast<int>(encode_constraints(s).tokens.size()) > kMaxStreamTokens) {
    s.constraints.pop_back();
  }
  return s;
}

}  // namespace

std::string_view split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_for(const Sketch& s) {
  const std::uint64_t bucket = content_hash(s) % kBucketTotal;
  if (bucket < kTrainBuckets) return Split::Train;
  if (bucket < kTrainBuckets + kValBuckets) return Split::Val;
  return Split::Test;
}

std::uint64_t corpus_hash(const std::vector<Sketch>& sketches) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : sketches) {
    std::uint64_t v = content_hash(s);
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

const Corpus& IngestResult::get(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  return train;
}

IngestResult ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return ingest(in, path);
}

IngestResult ingest(std::istream& in, const std::string& source) {
  IngestResult result;
  std::vector<Sketch> parts[3];
  DedupSet seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Sketch s;
    try {
      s = sketch_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      result.skipped.push_back({lineno, std::string("json: ") + e.what()});
      continue;
    } catch (const Error& e) {
      result.skipped.push_back({lineno, e.what()});
      continue;
    }
    if (auto v = validate(s); !v.empty()) {
      result.skipped.push_back({lineno, "invalid: " + to_string(v.front())});
      continue;
    }
    if (!seen.insert(s)) {
      ++result.duplicates;
      continue;
    }
    parts[static_cast<int>(split_for(s))].push_back(std::move(s));
  }
  result.train = make_corpus(std::move(parts[0]), Split::Train, source);
  result.val = make_corpus(std::move(parts[1]), Split::Val, source);
  result.test = make_corpus(std::move(parts[2]), Split::Test, source);
  return result;
}

std::vector<Sketch> read_sketches(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return read_sketches(in, path);
}

std::vector<Sketch> read_sketches(std::istream& in, const std::string& source) {
  std::vector<Sketch> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sketch_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, source + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(Errc::ParseError, source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_sketches(std::ostream& out, const std::vector<Sketch>& sketches) {
  for (const auto& s : sketches) out << to_json(s).dump() << '\n';
}

void write_sketches(const std::string& path, const std::vector<Sketch>& sketches) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  write_sketches(out, sketches);
}

Sketch synth_sketch(Rng& rng) {
  for (;;) {
    Builder b;
    outer_profile(b, rng);
    // One of the eight rotations/reflections of the lattice.
    const bool swap = rng.bernoulli(0.5), flip_x = rng.bernoulli(0.5), flip_y = rng.bernoulli(0.5);
    for (auto& e : b.entities) {
      for (auto& p : e.points) {
        if (swap) std::swap(p.x, p.y);
        if (flip_x) p.x = -p.x;
        if (flip_y) p.y = -p.y;
      }
    }
    if (swap) {
      for (auto& c : b.constraints) {
        if (c.type == ConstraintType::Horizontal) {
          c.type = ConstraintType::Vertical;
        } else if (c.type == ConstraintType::Vertical) {
          c.type = ConstraintType::Horizontal;
        }
      }
    }
    if (auto s = finish(b)) return *s;
  }
}

Corpus synth_corpus(int n, std::uint64_t seed) {
  Rng rng(seed);
  DedupSet seen;
  std::vector<Sketch> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  while (static_cast<int>(out.size()) < n) {
    Sketch s = synth_sketch(rng);
    if (seen.insert(s)) out.push_back(std::move(s));
  }
  return make_corpus(std::move(out), Split::Train, "synth:" + std::to_string(seed));
}

Example make_example(const Sketch& s, Rng& rng, std::optional<double> ratio_override,
                     const AugmentSpec& render, bool render_images) {
  const int m = static_cast<int>(s.entities.size());
  if (m < 2) throw Error(Errc::TooFewEntities, "need at least 2 entities, got " + std::to_string(m));
  Example ex;
  ex.ratio = ratio_override ? *ratio_override : rng.uniform(kMinPrefixRatio, kMaxPrefixRatio);
  const int k = std::clamp(static_cast<int>(std::floor(ex.ratio * m + 0.5)), 1, m - 1);

  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  std::vector<bool> in_prefix(static_cast<std::size_t>(m), false);
  for (int i = 0; i < k; ++i) in_prefix[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  for (int i = 0; i < m; ++i) {
    const auto& e = s.entities[static_cast<std::size_t>(i)];
    if (in_prefix[static_cast<std::size_t>(i)]) {
      ex.prefix_indices.push_back(i);
      ex.prefix_sketch.entities.push_back(e);
    } else {
      ex.suffix_entities.push_back(e);
    }
  }
  ex.prefix = encode_entities(ex.prefix_sketch.entities);
  ex.suffix = encode_entities(ex.suffix_entities);

  AugmentSpec spec = render;
  if (spec.mode != RenderMode::Precise) spec.seed = rng.next_u64();
  if (render_images) {
    ex.input_image = rasterize(ex.prefix_sketch, spec);
    ex.target_image = rasterize(Sketch{s.entities, {}}, spec);
  }
  return ex;
}

}  // namespace cadvlm

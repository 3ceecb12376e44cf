#include "cadvlm/raster.hpp"

#include <algorithm>
#include <cmath>

#include "cadvlm/error.hpp"
#include "cadvlm/rng.hpp"

namespace cadvlm {

namespace {

constexpr double kPxPerToken = (kImageSide - 2.0 * kMarginPx) / (kQuantLevels - 1);

double cross(Point o, Point a, Point b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double dist(Point a, Point b) { return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)); }

class Canvas {
 public:
  explicit Canvas(RasterImage& img) : img_(img) {}

  // Visits every pixel whose centre lies in the box grown by the stroke.
  template <typename Covered>
  void stroke(double x0, double y0, double x1, double y1, Rgb color, Covered covered) {
    const int c0 = std::max(0, static_cast<int>(std::floor(x0 - kStrokeHalfWidthPx - 1.0)));
    const int c1 = std::min(kImageSide - 1, static_cast<int>(std::ceil(x1 + kStrokeHalfWidthPx + 1.0)));
    const int r0 = std::max(0, static_cast<int>(std::floor(y0 - kStrokeHalfWidthPx - 1.0)));
    const int r1 = std::min(kImageSide - 1, static_cast<int>(std::ceil(y1 + kStrokeHalfWidthPx + 1.0)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (covered(Point{c + 0.5, r + 0.5})) {
          img_.at(r, c, 0) = color.r;
          img_.at(r, c, 1) = color.g;
          img_.at(r, c, 2) = color.b;
        }
      }
    }
  }

  void segment(Point a, Point b, Rgb color) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    stroke(std::min(a.x, b.x), std::min(a.y, b.y), std::max(a.x, b.x), std::max(a.y, b.y), color,
           [&](Point p) {
             double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
             t = std::clamp(t, 0.0, 1.0);
             const Point q{a.x + t * dx, a.y + t * dy};
             return dist(p, q) <= kStrokeHalfWidthPx;
           });
  }

  void circle(Point center, double radius, Rgb color) {
    stroke(center.x - radius, center.y - radius, center.x + radius, center.y + radius, color,
           [&](Point p) { return std::abs(dist(p, center) - radius) <= kStrokeHalfWidthPx; });
  }

  // Arc from s through m to e: the part of the circumcircle on m's side of
  // chord s-e. Only arithmetic and sqrt, so results are bit-stable.
  void arc(Point s, Point m, Point e, Rgb color) {
    const double side_m = cross(s, e, m);
    if (side_m == 0.0) {
      segment(s, m, color);
      segment(m, e, color);
      return;
    }
    const ArcGeometry g = arc_geometry(s, m, e);
    const Point c = g.center;
    const double rad = g.radius;
    stroke(c.x - rad, c.y - rad, c.x + rad, c.y + rad, color, [&](Point p) {
      const double d = dist(p, c);
      if (d == 0.0 || std::abs(d - rad) > kStrokeHalfWidthPx) return false;
      const Point on{c.x + (p.x - c.x) * rad / d, c.y + (p.y - c.y) * rad / d};
      const double side_p = cross(s, e, on);
      if (side_p == 0.0 || (side_p > 0.0) == (side_m > 0.0)) return true;
      // End caps.
      return dist(p, s) <= kStrokeHalfWidthPx || dist(p, e) <= kStrokeHalfWidthPx;
    });
  }

 private:
  RasterImage& img_;
};

void draw_entity(Canvas& canvas, const Entity& e) {
  std::vector<Point> px;
  px.reserve(e.points.size());
  for (const auto& q : e.points) px.push_back(token_to_pixel(q.qx, q.qy));
  const Rgb color = entity_color(e.kind);
  switch (e.kind) {
    case EntityKind::Line:
      canvas.segment(px[0], px[1], color);
      break;
    case EntityKind::Arc:
      canvas.arc(px[0], px[1], px[2], color);
      break;
    case EntityKind::Circle: {
      Point center{0.0, 0.0};
      for (const auto& p : px) {
        center.x += p.x;
        center.y += p.y;
      }
      center.x /= static_cast<double>(px.size());
      center.y /= static_cast<double>(px.size());
      double radius = 0.0;
      for (const auto& p : px) radius += dist(p, center);
      radius /= static_cast<double>(px.size());
      canvas.circle(center, radius, color);
      break;
    }
  }
}

RasterImage render(const Sketch& s) {
  RasterImage img;
  Canvas canvas(img);
  for (const auto& e : s.entities) draw_entity(canvas, e);
  return img;
}

}  // namespace

Rgb entity_color(EntityKind kind) {
  switch (kind) {
    case EntityKind::Line: return {0.0, 0.0, 1.0};
    case EntityKind::Arc: return {0.0, 0.5, 0.0};
    case EntityKind::Circle: return {1.0, 0.0, 0.0};
  }
  return {0.0, 0.0, 0.0};
}

Point token_to_pixel(double qx, double qy) {
  return {kMarginPx + (qx - kQuantMin) * kPxPerToken,
          (kImageSide - kMarginPx) - (qy - kQuantMin) * kPxPerToken};
}

RasterImage rasterize(const Sketch& s, const AugmentSpec& spec) {
  for (std::size_t i = 0; i < s.entities.size(); ++i) {
    if (auto rule = entity_violation(s.entities[i])) {
      throw Error(Errc::InvalidSketch, "cannot rasterize: " + to_string(Violation{*rule, static_cast<int>(i)}));
    }
  }
  switch (spec.mode) {
    case RenderMode::Precise:
      return render(s);
    case RenderMode::HandDrawn:
      return render(hand_drawn(s, spec.seed, spec.jitter_sigma));
    case RenderMode::NoisyHandDrawn: {
      Rng rng(spec.seed);
      const std::uint64_t jitter_seed = rng.next_u64();
      const std::uint64_t affine_seed = rng.next_u64();
      return noisy_affine(render(hand_drawn(s, jitter_seed, spec.jitter_sigma)), affine_seed);
    }
  }
  return render(s);
}

ArcGeometry arc_geometry(Point start, Point mid, Point end) {
  // Circumcentre in coordinates relative to the start point.
  const double bx = mid.x - start.x, by = mid.y - start.y;
  const double cx = end.x - start.x, cy = end.y - start.y;
  const double den = 2.0 * (bx * cy - by * cx);
  if (den == 0.0) throw Error(Errc::CollinearPoints, "arc points are collinear");
  const double b2 = bx * bx + by * by;
  const double c2 = cx * cx + cy * cy;
  ArcGeometry g;
  g.center = {start.x + (cy * b2 - by * c2) / den, start.y + (bx * c2 - cx * b2) / den};
  g.radius = dist(g.center, start);
  g.start_angle = std::atan2(start.y - g.center.y, start.x - g.center.x);
  g.mid_angle = std::atan2(mid.y - g.center.y, mid.x - g.center.x);
  g.end_angle = std::atan2(end.y - g.center.y, end.x - g.center.x);
  g.counter_clockwise = den > 0.0;
  return g;
}

Sketch hand_drawn(const Sketch& s, std::uint64_t seed, double sigma) {
  Sketch out = s;
  if (sigma <= 0.0) return out;
  Rng rng(seed);
  auto jitter = [&](int q) {
    const double v = std::floor(q + rng.normal(0.0, sigma) + 0.5);
    return static_cast<int>(std::clamp(v, static_cast<double>(kQuantMin), static_cast<double>(kQuantMax)));
  };
  for (auto& e : out.entities) {
    for (auto& p : e.points) {
      p.qx = jitter(p.qx);
      p.qy = jitter(p.qy);
    }
  }
  return out;
}

AffineParams sample_affine(std::uint64_t seed) {
  Rng rng(seed);
  AffineParams p;
  p.rotation_deg = rng.uniform(-5.0, 5.0);
  p.shift_x = rng.uniform(-0.05, 0.05);
  p.shift_y = rng.uniform(-0.05, 0.05);
  p.scale = rng.uniform(0.9, 1.1);
  return p;
}

RasterImage apply_affine(const RasterImage& img, const AffineParams& params) {
  constexpr double kCentre = kImageSide / 2.0;
  const double theta = params.rotation_deg * 3.14159265358979323846 / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double tx = params.shift_x * kImageSide;
  const double ty = params.shift_y * kImageSide;

  auto sample = [&img](int r, int c, int ch) {
    if (r < 0 || c < 0 || r >= kImageSide || c >= kImageSide) return 1.0;
    return img.at(r, c, ch);
  };

  RasterImage out;
  for (int r = 0; r < kImageSide; ++r) {
    for (int c = 0; c < kImageSide; ++c) {
      // Inverse map: undo shift, then rotation and scale about the centre.
      const double ox = c + 0.5 - kCentre - tx;
      const double oy = r + 0.5 - kCentre - ty;
      const double sx = (cs * ox + sn * oy) / params.scale + kCentre;
      const double sy = (-sn * ox + cs * oy) / params.scale + kCentre;
      const double u = sx - 0.5;
      const double v = sy - 0.5;
      const double fu = std::floor(u);
      const double fv = std::floor(v);
      const int c0 = static_cast<int>(fu);
      const int r0 = static_cast<int>(fv);
      const double wu = u - fu;
      const double wv = v - fv;
      for (int ch = 0; ch < kChannels; ++ch) {
        const double top = sample(r0, c0, ch) * (1.0 - wu) + sample(r0, c0 + 1, ch) * wu;
        const double bot = sample(r0 + 1, c0, ch) * (1.0 - wu) + sample(r0 + 1, c0 + 1, ch) * wu;
        out.at(r, c, ch) = top * (1.0 - wv) + bot * wv;
      }
    }
  }
  return out;
}

RasterImage noisy_affine(const RasterImage& img, std::uint64_t seed) {
  return apply_affine(img, sample_affine(seed));
}

}  // namespace cadvlm

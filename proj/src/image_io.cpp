#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cadvlm/error.hpp"
#include "cadvlm/raster.hpp"

namespace cadvlm {

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char (&type)[5], const std::vector<std::uint8_t>& body) {
  put_u32_be(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const uLong crc = crc32(0L, out.data() + type_at, static_cast<uInt>(4 + body.size()));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

// zlib stream made of stored deflate blocks.
std::vector<std::uint8_t> zlib_stored(const std::vector<std::uint8_t>& raw) {
  constexpr std::size_t kMaxBlock = 65535;
  std::vector<std::uint8_t> out = {0x78, 0x01};
  std::size_t pos = 0;
  do {
    const std::size_t len = std::min(kMaxBlock, raw.size() - pos);
    const bool final_block = pos + len == raw.size();
    out.push_back(final_block ? 1 : 0);
    out.push_back(static_cast<std::uint8_t>(len & 0xff));
    out.push_back(static_cast<std::uint8_t>(len >> 8));
    out.push_back(static_cast<std::uint8_t>(~len & 0xff));
    out.push_back(static_cast<std::uint8_t>((~len >> 8) & 0xff));
    out.insert(out.end(), raw.begin() + static_cast<std::ptrdiff_t>(pos),
               raw.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  } while (pos < raw.size());
  const uLong adler = adler32(1L, raw.data(), static_cast<uInt>(raw.size()));
  put_u32_be(out, static_cast<std::uint32_t>(adler));
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(kImageSide) * (1 + kImageSide * kChannels));
  for (int r = 0; r < kImageSide; ++r) {
    raw.push_back(0);  // filter: none
    for (int c = 0; c < kImageSide; ++c) {
      for (int ch = 0; ch < kChannels; ++ch) {
        const double v = std::clamp(img.at(r, c, ch), 0.0, 1.0);
        raw.push_back(static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5)));
      }
    }
  }

  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, kImageSide);
  put_u32_be(ihdr, kImageSide);
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit truecolour, no interlace
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", zlib_stored(raw));
  put_chunk(png, "IEND", {});
  return png;
}

void write_png(const std::string& path, const RasterImage& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot open " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "write failed for " + path);
}

std::string to_svg(const Sketch& s) {
  // Unit box [-0.5,0.5]^2 drawn into a 224px canvas, y up.
  constexpr double kScale = kImageSide - 2.0 * kMarginPx;
  auto px = [](Point p) {
    return Point{kImageSide / 2.0 + p.x * kScale, kImageSide / 2.0 - p.y * kScale};
  };
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kImageSide << "\" height=\""
      << kImageSide << "\" viewBox=\"0 0 " << kImageSide << ' ' << kImageSide << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& e : s.entities) {
    if (entity_violation(e)) continue;
    std::vector<Point> pts;
    for (const auto& q : e.points) pts.push_back(px(dequantize(q)));
    switch (e.kind) {
      case EntityKind::Line:
        out << "<line x1=\"" << num(pts[0].x) << "\" y1=\"" << num(pts[0].y) << "\" x2=\""
            << num(pts[1].x) << "\" y2=\"" << num(pts[1].y)
            << "\" stroke=\"blue\" stroke-width=\"2\" fill=\"none\"/>\n";
        break;
      case EntityKind::Arc: {
        const ArcGeometry g = arc_geometry(pts[0], pts[1], pts[2]);
        // Major arc iff the centre lies on the mid point's side of the chord.
        const auto side = [&](Point p) {
          return (pts[2].x - pts[0].x) * (p.y - pts[0].y) - (pts[2].y - pts[0].y) * (p.x - pts[0].x);
        };
        const bool large = side(g.center) * side(pts[1]) > 0.0;
        // Screen coordinates are y-down, so a positive turn is the SVG sweep.
        const bool sweep = g.counter_clockwise;
        out << "<path d=\"M " << num(pts[0].x) << ' ' << num(pts[0].y) << " A " << num(g.radius) << ' '
            << num(g.radius) << " 0 " << (large ? 1 : 0) << ' ' << (sweep ? 1 : 0) << ' '
            << num(pts[2].x) << ' ' << num(pts[2].y)
            << "\" stroke=\"green\" stroke-width=\"2\" fill=\"none\"/>\n";
        break;
      }
      case EntityKind::Circle: {
        Point c{0.0, 0.0};
        for (const auto& p : pts) {
          c.x += p.x / 4.0;
          c.y += p.y / 4.0;
        }
        double r = 0.0;
        for (const auto& p : pts) r += std::hypot(p.x - c.x, p.y - c.y) / 4.0;
        out << "<circle cx=\"" << num(c.x) << "\" cy=\"" << num(c.y) << "\" r=\"" << num(r)
            << "\" stroke=\"red\" stroke-width=\"2\" fill=\"none\"/>\n";
        break;
      }
    }
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace cadvlm

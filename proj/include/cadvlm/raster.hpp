#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cadvlm/sketch.hpp"

namespace cadvlm {

inline constexpr int kImageSide = 224;
inline constexpr int kChannels = 3;
inline constexpr int kImageValues = kImageSide * kImageSide * kChannels;
// Token grid [1,64]^2 maps onto the pixel box [16, 208]^2.
inline constexpr double kMarginPx = 16.0;
inline constexpr double kStrokeHalfWidthPx = 1.0;

struct Rgb {
  double r, g, b;
};

// Fig.-1 palette: lines blue, arcs green, circles red.
Rgb entity_color(EntityKind kind);

// 224x224x3, row-major HWC, channel values in [0,1], white background.
struct RasterImage {
  std::vector<double> pixels = std::vector<double>(kImageValues, 1.0);

  double at(int row, int col, int ch) const {
    return pixels[(static_cast<std::size_t>(row) * kImageSide + col) * kChannels + ch];
  }
  double& at(int row, int col, int ch) {
    return pixels[(static_cast<std::size_t>(row) * kImageSide + col) * kChannels + ch];
  }
  bool is_white(int row, int col) const {
    return at(row, col, 0) == 1.0 && at(row, col, 1) == 1.0 && at(row, col, 2) == 1.0;
  }

  bool operator==(const RasterImage&) const = default;
};

enum class RenderMode { Precise, HandDrawn, NoisyHandDrawn };

struct AugmentSpec {
  RenderMode mode = RenderMode::Precise;
  std::uint64_t seed = 0;
  double jitter_sigma = 1.0;  // token units, hand-drawn modes only
};

// Continuous token coordinates to pixel coordinates (y axis flipped so the
// sketch appears upright).
Point token_to_pixel(double qx, double qy);

// Throws Errc::InvalidSketch if any entity is malformed. An empty entity list
// renders as a white image.
RasterImage rasterize(const Sketch& s, const AugmentSpec& spec = {});

struct ArcGeometry {
  Point center;
  double radius = 0.0;
  double start_angle = 0.0;  // radians, atan2 convention
  double mid_angle = 0.0;
  double end_angle = 0.0;
  bool counter_clockwise = true;  // sweep direction start -> mid -> end
};

// Circumcircle of the three points; throws Errc::CollinearPoints.
ArcGeometry arc_geometry(Point start, Point mid, Point end);

// Gaussian point jitter in token units, rounded back onto the grid and clamped
// to [1,64]. Kinds and point counts are preserved; sigma == 0 is the identity.
Sketch hand_drawn(const Sketch& s, std::uint64_t seed, double sigma = 1.0);

struct AffineParams {
  double rotation_deg = 0.0;
  double shift_x = 0.0;  // fraction of image side
  double shift_y = 0.0;
  double scale = 1.0;
};

// rotation U(-5,5) deg, shift U(-0.05,0.05) per axis, scale U(0.9,1.1).
AffineParams sample_affine(std::uint64_t seed);

// Rotate/scale about the image centre then shift; bilinear resampling with
// white fill outside the source.
RasterImage apply_affine(const RasterImage& img, const AffineParams& params);
RasterImage noisy_affine(const RasterImage& img, std::uint64_t seed);

// 8-bit RGB PNG with stored (uncompressed) deflate blocks, so bytes depend
// only on pixel values and never on the zlib build.
std::vector<std::uint8_t> encode_png(const RasterImage& img);
void write_png(const std::string& path, const RasterImage& img);

// Vector rendering of the dequantized geometry with true arcs.
std::string to_svg(const Sketch& s);

}  // namespace cadvlm

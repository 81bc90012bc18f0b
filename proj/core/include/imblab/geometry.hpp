#pragma once

#include <array>

namespace imblab {

// Axis-aligned box, corner form, pixel units.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
};

// Intersection over union in [0,1]; degenerate (zero-area) boxes give 0.
double iou(const Box& a, const Box& b);

// Standard box-delta parameterization relative to an anchor:
// (dcx/wa, dcy/ha, log(wg/wa), log(hg/ha)).
std::array<double, 4> encode_delta(const Box& anchor, const Box& gt);

// Inverse of encode_delta. Size deltas are clamped to kDecodeSizeClamp before
// exp() so a wild regression head cannot overflow.
inline constexpr double kDecodeSizeClamp = 4.0;
Box decode_delta(const Box& anchor, const std::array<double, 4>& delta);

Box clip_box(const Box& b, double width, double height);

}  // namespace imblab

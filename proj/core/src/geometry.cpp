#include "imblab/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace imblab {

double iou(const Box& a, const Box& b) {
  const double area_a = a.area();
  const double area_b = b.area();
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double ix1 = std::max(a.x1, b.x1);
  const double iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy2 = std::min(a.y2, b.y2);
  const double iw = ix2 - ix1;
  const double ih = iy2 - iy1;
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (area_a + area_b - inter);
}

std::array<double, 4> encode_delta(const Box& anchor, const Box& gt) {
  const double wa = anchor.width(), ha = anchor.height();
  return {(gt.cx() - anchor.cx()) / wa, (gt.cy() - anchor.cy()) / ha,
          std::log(gt.width() / wa), std::log(gt.height() / ha)};
}

Box decode_delta(const Box& anchor, const std::array<double, 4>& delta) {
  const double wa = anchor.width(), ha = anchor.height();
  const double cx = anchor.cx() + delta[0] * wa;
  const double cy = anchor.cy() + delta[1] * ha;
  const double dw = std::min(delta[2], kDecodeSizeClamp);
  const double dh = std::min(delta[3], kDecodeSizeClamp);
  const double w = wa * std::exp(dw);
  const double h = ha * std::exp(dh);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

Box clip_box(const Box& b, double width, double height) {
  return {std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height),
          std::clamp(b.x2, 0.0, width), std::clamp(b.y2, 0.0, height)};
}

}  // namespace imblab

#include "gkcmn/box.hpp"

#include <algorithm>

#include "gkcmn/errors.hpp"

namespace gkcmn {

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return iw > 0 && ih > 0 ? iw * ih : 0.0;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double giou(const BoundingBox& a, const BoundingBox& b) { return giou_with_gradient(a, b).value; }

GiouGradient giou_with_gradient(const BoundingBox& p, const BoundingBox& g) {
  if (!p.well_formed() || !g.well_formed()) throw DomainError("giou requires x1 <= x2 and y1 <= y2");

  // Overlap extents; the subgradient of max(0, .) is taken as 0 at the kink.
  const double iw_raw = std::min(p.x2, g.x2) - std::max(p.x1, g.x1);
  const double ih_raw = std::min(p.y2, g.y2) - std::max(p.y1, g.y1);
  const bool overlap = iw_raw > 0 && ih_raw > 0;
  const double iw = overlap ? iw_raw : 0.0;
  const double ih = overlap ? ih_raw : 0.0;
  const double inter = iw * ih;

  const double pw = p.width(), ph = p.height();
  const double uni = pw * ph + g.area() - inter;
  if (uni <= 0) throw DomainError("giou undefined for two zero-area boxes");

  const double cw = std::max(p.x2, g.x2) - std::min(p.x1, g.x1);
  const double ch = std::max(p.y2, g.y2) - std::min(p.y1, g.y1);
  const double hull = cw * ch;

  GiouGradient out{};
  out.value = inter / uni - (hull - uni) / hull;

  // d/d(x1, y1, x2, y2) of each ingredient.
  std::array<double, 4> d_iw{}, d_ih{};
  if (overlap) {
    d_iw = {p.x1 >= g.x1 ? -1.0 : 0.0, 0.0, p.x2 <= g.x2 ? 1.0 : 0.0, 0.0};
    d_ih = {0.0, p.y1 >= g.y1 ? -1.0 : 0.0, 0.0, p.y2 <= g.y2 ? 1.0 : 0.0};
  }
  const std::array<double, 4> d_area{-ph, -pw, ph, pw};
  const std::array<double, 4> d_cw{p.x1 < g.x1 ? -1.0 : 0.0, 0.0, p.x2 > g.x2 ? 1.0 : 0.0, 0.0};
  const std::array<double, 4> d_ch{0.0, p.y1 < g.y1 ? -1.0 : 0.0, 0.0, p.y2 > g.y2 ? 1.0 : 0.0};

  for (int k = 0; k < 4; ++k) {
    const double d_inter = d_iw[k] * ih + iw * d_ih[k];
    const double d_uni = d_area[k] - d_inter;
    const double d_hull = d_cw[k] * ch + cw * d_ch[k];
    out.d_pred[k] = (d_inter * uni - inter * d_uni) / (uni * uni) + (d_uni * hull - uni * d_hull) / (hull * hull);
  }
  return out;
}

}  // namespace gkcmn

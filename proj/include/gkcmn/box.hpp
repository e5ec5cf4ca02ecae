#pragma once

#include <array>

namespace gkcmn {

/// Axis-aligned box with x1 <= x2 and y1 <= y2, in pixels or feature-map cells.
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  bool well_formed() const noexcept { return x1 <= x2 && y1 <= y2; }
  BoundingBox scaled(double sx, double sy) const noexcept { return {x1 * sx, y1 * sy, x2 * sx, y2 * sy}; }

  bool operator==(const BoundingBox&) const = default;
};

double intersection_area(const BoundingBox& a, const BoundingBox& b);

/// Intersection over union; 0 when the union is empty.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Generalized IoU in (-1, 1]. Throws DomainError if both boxes have zero area.
double giou(const BoundingBox& a, const BoundingBox& b);

struct GiouGradient {
  double value;
  std::array<double, 4> d_pred;  // d GIoU / d (x1, y1, x2, y2) of the predicted box
};

/// GIoU(pred, target) and its (sub)gradient with respect to the predicted corners.
GiouGradient giou_with_gradient(const BoundingBox& pred, const BoundingBox& target);

}  // namespace gkcmn

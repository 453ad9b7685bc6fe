#pragma once

#include <array>

namespace dbea {

// Normalized center-format box.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double operator[](int i) const { return i == 0 ? cx : i == 1 ? cy : i == 2 ? w : h; }
  std::array<double, 4> as_array() const { return {cx, cy, w, h}; }
  double area() const { return w * h; }
  bool in_unit_range() const;

  friend bool operator==(const Box&, const Box&) = default;
};

double iou(const Box& a, const Box& b);

// Generalized IoU in [-1, 1]. Two zero-area boxes (empty enclosure) give 0.
double giou(const Box& a, const Box& b);

// giou(a, b) together with d giou / d(cx, cy, w, h) of `a`. At min/max switch points one
// side's derivative is taken.
struct GiouGrad {
  double value = 0.0;
  std::array<double, 4> d_a{};
};
GiouGrad giou_with_grad(const Box& a, const Box& b);

double l1_distance(const Box& a, const Box& b);

}  // namespace dbea

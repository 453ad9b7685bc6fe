#include "dbea/box.hpp"

#include <algorithm>
#include <cmath>

namespace dbea {

namespace {

struct Corners {
  double x1, y1, x2, y2;
};

Corners corners(const Box& b) {
  return {b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.cx + 0.5 * b.w, b.cy + 0.5 * b.h};
}

}  // namespace

bool Box::in_unit_range() const {
  auto ok = [](double v) { return v >= 0.0 && v <= 1.0; };
  return ok(cx) && ok(cy) && ok(w) && ok(h);
}

double iou(const Box& a, const Box& b) {
  const Corners ca = corners(a), cb = corners(b);
  const double iw = std::max(0.0, std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1));
  const double ih = std::max(0.0, std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const Box& a, const Box& b) { return giou_with_grad(a, b).value; }

GiouGrad giou_with_grad(const Box& a, const Box& b) {
  const Corners ca = corners(a), cb = corners(b);

  const double ix1 = std::max(ca.x1, cb.x1), ix2 = std::min(ca.x2, cb.x2);
  const double iy1 = std::max(ca.y1, cb.y1), iy2 = std::min(ca.y2, cb.y2);
  const double iw = std::max(0.0, ix2 - ix1);
  const double ih = std::max(0.0, iy2 - iy1);
  const double inter = iw * ih;
  const double area_a = (ca.x2 - ca.x1) * (ca.y2 - ca.y1);
  const double area_b = (cb.x2 - cb.x1) * (cb.y2 - cb.y1);
  const double uni = area_a + area_b - inter;

  const double cw = std::max(ca.x2, cb.x2) - std::min(ca.x1, cb.x1);
  const double ch = std::max(ca.y2, cb.y2) - std::min(ca.y1, cb.y1);
  const double enc = cw * ch;

  GiouGrad out;
  if (!(enc > 0.0) || !(uni > 0.0)) return out;
  out.value = inter / uni - (enc - uni) / enc;

  // Partials with respect to a's corners (x1, y1, x2, y2).
  std::array<double, 4> d_inter{}, d_area{}, d_enc{};
  if (iw > 0.0 && ih > 0.0) {
    d_inter[0] = ca.x1 > cb.x1 ? -ih : 0.0;
    d_inter[2] = ca.x2 < cb.x2 ? ih : 0.0;
    d_inter[1] = ca.y1 > cb.y1 ? -iw : 0.0;
    d_inter[3] = ca.y2 < cb.y2 ? iw : 0.0;
  }
  d_area[0] = -(ca.y2 - ca.y1);
  d_area[2] = (ca.y2 - ca.y1);
  d_area[1] = -(ca.x2 - ca.x1);
  d_area[3] = (ca.x2 - ca.x1);
  d_enc[0] = ca.x1 < cb.x1 ? -ch : 0.0;
  d_enc[2] = ca.x2 > cb.x2 ? ch : 0.0;
  d_enc[1] = ca.y1 < cb.y1 ? -cw : 0.0;
  d_enc[3] = ca.y2 > cb.y2 ? cw : 0.0;

  // giou = inter/uni - 1 + uni/enc
  std::array<double, 4> d_corner{};
  for (int i = 0; i < 4; ++i) {
    const double d_uni = d_area[i] - d_inter[i];
    d_corner[i] = d_inter[i] / uni - inter * d_uni / (uni * uni) + d_uni / enc - uni * d_enc[i] / (enc * enc);
  }
  // x1 = cx - w/2, x2 = cx + w/2 (same for y).
  out.d_a[0] = d_corner[0] + d_corner[2];
  out.d_a[1] = d_corner[1] + d_corner[3];
  out.d_a[2] = 0.5 * (d_corner[2] - d_corner[0]);
  out.d_a[3] = 0.5 * (d_corner[3] - d_corner[1]);
  return out;
}

double l1_distance(const Box& a, const Box& b) {
  return std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) + std::abs(a.h - b.h);
}

}  // namespace dbea

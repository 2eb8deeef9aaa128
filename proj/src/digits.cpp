// Parametric digit stills. Each class is a fixed set of pen strokes in a
// unit box; a seeded affine jitter (rotate / scale / shear / shift) plus
// pen-width and contrast variation makes every sample distinct while
// keeping classes linearly separable only imperfectly -- deliberate
// headroom for representation learning to improve on raw pixels.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "rwta/data.hpp"

namespace rwta {

namespace {

struct P {
  double x, y;
};
using Stroke = std::vector<P>;

Stroke ring(double cx, double cy, double rx, double ry, int segments = 14) {
  Stroke s;
  for (int i = 0; i <= segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    s.push_back({cx + rx * std::sin(a), cy - ry * std::cos(a)});
  }
  return s;
}

// Strokes per digit, coordinates in [0,1] x [0,1], y pointing down.
const std::vector<std::vector<Stroke>>& glyphs() {
  static const std::vector<std::vector<Stroke>> g = {
      // 0
      {ring(0.5, 0.5, 0.21, 0.32)},
      // 1
      {{{0.36, 0.30}, {0.52, 0.16}, {0.52, 0.84}}},
      // 2
      {{{0.28, 0.32}, {0.34, 0.19}, {0.52, 0.15}, {0.68, 0.22}, {0.71, 0.36},
        {0.55, 0.55}, {0.30, 0.80}},
       {{0.28, 0.82}, {0.72, 0.82}}},
      // 3
      {{{0.30, 0.22}, {0.50, 0.15}, {0.68, 0.24}, {0.62, 0.42}, {0.48, 0.47}},
       {{0.48, 0.47}, {0.68, 0.55}, {0.70, 0.72}, {0.52, 0.84}, {0.30, 0.77}}},
      // 4
      {{{0.64, 0.16}, {0.27, 0.62}, {0.76, 0.62}}, {{0.62, 0.34}, {0.62, 0.85}}},
      // 5
      {{{0.68, 0.17}, {0.33, 0.17}, {0.31, 0.45}, {0.52, 0.40}, {0.69, 0.52},
        {0.68, 0.72}, {0.50, 0.83}, {0.30, 0.76}}},
      // 6
      {{{0.64, 0.16}, {0.44, 0.28}, {0.32, 0.52}, {0.34, 0.72}, {0.50, 0.83},
        {0.66, 0.72}, {0.64, 0.54}, {0.48, 0.48}, {0.34, 0.58}}},
      // 7
      {{{0.27, 0.18}, {0.73, 0.18}, {0.44, 0.84}}},
      // 8
      {ring(0.5, 0.32, 0.16, 0.16), ring(0.5, 0.66, 0.19, 0.18)},
      // 9
      {ring(0.52, 0.34, 0.17, 0.17), {{0.69, 0.34}, {0.66, 0.60}, {0.56, 0.85}}},
  };
  return g;
}

double seg_dist2(double px, double py, const P& a, const P& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = px - a.x, wy = py - a.y;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
  return dx * dx + dy * dy;
}

}  // namespace

template <class T>
ImageDataset<T> synthetic_digits(int count, SeededRng& rng) {
  if (count < 1) throw ConfigError("synthetic_digits: count must be >= 1");
  constexpr int kSize = 28;
  ImageDataset<T> ds;
  ds.images = Tensor4<T>({count, 1, kSize, kSize});
  ds.labels.resize(count);
  ds.class_count = 10;

  for (int i = 0; i < count; ++i) {
    const int digit = i % 10;
    ds.labels[i] = digit;

    // Jitter for this sample; the draw order is part of the format.
    const double theta = rng.uniform(-30.0, 30.0) * std::numbers::pi / 180.0;
    const double sc = rng.uniform(0.82, 1.12);
    const double shear = rng.uniform(-0.18, 0.18);
    const double tx = rng.uniform(-2.0, 2.0);
    const double ty = rng.uniform(-2.0, 2.0);
    const double sigma = rng.uniform(0.85, 1.25);
    const double gain = rng.uniform(0.8, 1.0);

    const double co = std::cos(theta), si = std::sin(theta);
    auto to_px = [&](const P& p) -> P {
      double x = (p.x - 0.5) * sc, y = (p.y - 0.5) * sc;
      x += shear * y;
      const double rx = co * x - si * y, ry = si * x + co * y;
      return {rx * 22.0 + 13.5 + tx, ry * 22.0 + 13.5 + ty};
    };

    std::vector<std::pair<P, P>> segs;
    for (const Stroke& s : glyphs()[digit])
      for (size_t k = 0; k + 1 < s.size(); ++k)
        segs.emplace_back(to_px(s[k]), to_px(s[k + 1]));

    T* img = ds.images.plane(i, 0);
    for (int r = 0; r < kSize; ++r)
      for (int q = 0; q < kSize; ++q) {
        double d2 = 1e9;
        for (const auto& [a, b] : segs) d2 = std::min(d2, seg_dist2(q, r, a, b));
        double v = gain * std::exp(-d2 / (2.0 * sigma * sigma));
        v += rng.uniform(-0.03, 0.03);  // sensor-ish speckle
        img[r * kSize + q] = T(std::clamp(v, 0.0, 1.0));
      }
  }
  ds.validate();
  return ds;
}

template ImageDataset<float> synthetic_digits(int, SeededRng&);
template ImageDataset<double> synthetic_digits(int, SeededRng&);

}  // namespace rwta

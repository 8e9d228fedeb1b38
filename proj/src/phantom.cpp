#include "usrgr/phantom.hpp"

#include <cmath>

namespace usrgr {
namespace data {

Tensor<float> gen_phantom(const PhantomSpec& spec) {
  if (spec.ellipses.empty()) throw ShapeError("gen_phantom: at least one ellipse required");
  Tensor<float> img({spec.height, spec.width});
  for (int y = 0; y < spec.height; ++y) {
    const double v = (y + 0.5) / spec.height;
    for (int x = 0; x < spec.width; ++x) {
      const double u = (x + 0.5) / spec.width;
      double val = spec.background;
      for (const Ellipse& e : spec.ellipses) {
        const double du = u - e.cx, dv = v - e.cy;
        const double c = std::cos(e.rot), s = std::sin(e.rot);
        const double p = (du * c + dv * s) / e.ax;
        const double q = (-du * s + dv * c) / e.ay;
        if (p * p + q * q <= 1.0) val += e.intensity;
      }
      img.at(y, x) = static_cast<float>(val < 0.0 ? 0.0 : val);
    }
  }
  return img;
}

PhantomSpec random_phantom_spec(int size, Rng& rng) {
  PhantomSpec spec;
  spec.height = spec.width = size;
  spec.background = rng.uniform(0.05, 0.15);
  const int count = 3 + static_cast<int>(rng.below(6));
  for (int i = 0; i < count; ++i) {
    Ellipse e;
    e.cx = rng.uniform(0.2, 0.8);
    e.cy = rng.uniform(0.2, 0.8);
    e.ax = rng.uniform(0.08, 0.35);
    e.ay = rng.uniform(0.08, 0.35);
    e.rot = rng.uniform(0.0, 3.14159265358979323846);
    e.intensity = i == 0 ? rng.uniform(0.3, 0.6) : rng.uniform(-0.25, 0.5);
    spec.ellipses.push_back(e);
  }
  return spec;
}

float max_discontinuity(const Tensor<float>& img) {
  float peak = 0.0f;
  const int h = img.dim(0), w = img.dim(1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) peak = std::max(peak, std::abs(img.at(y, x + 1) - img.at(y, x)));
      if (y + 1 < h) peak = std::max(peak, std::abs(img.at(y + 1, x) - img.at(y, x)));
    }
  return peak;
}

}  // namespace data
}  // namespace usrgr

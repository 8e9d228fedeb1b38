#pragma once

#include <cstdint>
#include <vector>

#include "usrgr/rng.hpp"
#include "usrgr/tensor.hpp"

namespace usrgr {
namespace data {

struct Ellipse {
  double cx = 0.5, cy = 0.5;     // center in [0,1] image coordinates
  double ax = 0.25, ay = 0.25;   // semi-axes in [0,1] units
  double rot = 0.0;              // radians
  double intensity = 0.5;        // additive
};

struct PhantomSpec {
  int height = 64;
  int width = 64;
  std::vector<Ellipse> ellipses;
  double background = 0.1;
  std::uint64_t seed = 0;
};

/// Sum of hard-edged ellipse indicators plus the background, clipped to >= 0.
/// No anti-aliasing: sharp edges are the point.
Tensor<float> gen_phantom(const PhantomSpec& spec);

/// 3-8 ellipses with one strong component; deterministic in the rng stream.
PhantomSpec random_phantom_spec(int size, Rng& rng);

/// Largest absolute neighbor difference (horizontal or vertical).
float max_discontinuity(const Tensor<float>& img);

}  // namespace data
}  // namespace usrgr

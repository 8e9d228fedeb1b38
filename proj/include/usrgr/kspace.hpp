#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "usrgr/autodiff.hpp"
#include "usrgr/tensor.hpp"

namespace usrgr {
namespace kspace {

/// 2D complex spectrum with centered ordering: DC sits at (height/2, width/2)
/// and index (r,c) carries frequency (r - height/2, c - width/2).
struct ComplexGrid {
  int height = 0;
  int width = 0;
  std::vector<std::complex<double>> data;

  ComplexGrid() = default;
  ComplexGrid(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w) {}

  std::complex<double>& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  const std::complex<double>& at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
};

/// Finite half-band lowpass for factor-`factor` decimation; values sum to 1
/// and are even-symmetric about the center tap.
struct SincKernel {
  int taps = 0;
  int factor = 2;
  std::vector<double> values;
};

struct DegradeConfig {
  int factor = 2;
  double noise_sigma = 0.0;
  int sinc_taps = 31;
};

/// Unitary centered 2D DFT (1/sqrt(HW) both directions). Input is a 2D [H,W]
/// tensor; arithmetic is double internally regardless of T.
template <typename T>
ComplexGrid dft2(const Tensor<T>& img);

/// Unitary inverse; returns the real part. If max_imag is non-null it
/// receives the largest |imaginary| residual of the reconstruction.
template <typename T>
Tensor<T> idft2(const ComplexGrid& grid, double* max_imag = nullptr);

/// Frequency-crop downsampling: keep the centered (H/factor)x(W/factor)
/// block, fold the asymmetric +Nyquist line into the -Nyquist line with
/// weight 1/2 per axis (keeps the small spectrum Hermitian and the output
/// exactly real), scale so the image mean is preserved, inverse-transform at
/// the small grid. Linear in the input.
template <typename T>
Tensor<T> f_crop(const Tensor<T>& img, int factor = 2);

/// Adjoint of f_crop as a real-linear map: [H/f, W/f] -> [H, W].
template <typename T>
Tensor<T> f_crop_adjoint(const Tensor<T>& img, int factor, int out_h, int out_w);

/// With `period` given, samples the periodic (Dirichlet) kernel that exactly
/// realizes f_crop's per-axis frequency box for that period; otherwise the
/// aperiodic half-band sinc sin(pi t / factor)/(pi t). Truncated to `taps`
/// (odd) and renormalized to sum 1.
SincKernel build_sinc_kernel(int taps, int factor = 2, int period = 0);

/// Separable circular convolution with the kernel, then decimation keeping
/// indices 0, factor, 2*factor, ... per axis.
template <typename T>
Tensor<T> sinc_downsample(const Tensor<T>& img, const SincKernel& kernel, int factor = 2);

/// Separable Keys bicubic (a = -0.5), edge-clamped, arbitrary output extents.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, int out_h, int out_w);

/// f_crop plus optional additive Gaussian noise from a seeded generator.
template <typename T>
Tensor<T> degrade(const Tensor<T>& img, const DegradeConfig& cfg, std::uint64_t seed);

// ---- differentiable wrappers over [B,C,H,W] batches ----

template <typename T>
ad::Var<T> f_crop_op(const ad::Var<T>& x, int factor = 2);

template <typename T>
ad::Var<T> sinc_downsample_op(const ad::Var<T>& x, const SincKernel& kernel);

}  // namespace kspace
}  // namespace usrgr

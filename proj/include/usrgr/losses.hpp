#pragma once

#include <vector>

#include "usrgr/autodiff.hpp"
#include "usrgr/kspace.hpp"
#include "usrgr/model.hpp"

namespace usrgr {
namespace losses {

/// Weights and distance settings shared by all training objectives.
/// alpha mixes MS-SSIM against L1 inside L_d; beta/gamma weight the fidelity
/// and sinc terms of the total loss; hinge_floor is the sinc hinge level a.
struct LossConfig {
  double alpha = 0.84;
  double beta = 1.0;
  double gamma = 0.5;
  double hinge_floor = 0.001;
  int msssim_scales = 3;
  std::vector<double> msssim_weights;  // empty -> canonical 5-scale weights, truncated + renormalized
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double dynamic_range = 1.0;

  std::vector<double> scale_weights() const;
  void validate() const;
};

template <typename T>
ad::Var<T> l1(const ad::Var<T>& x, const ad::Var<T>& y);

/// Standard MS-SSIM over [B,C,H,W] (mean across items): per-scale mean
/// contrast-structure with luminance at the coarsest scale, Gaussian valid
/// windows, dyadic 2x mean-pooling between scales. The effective number of
/// scales is clamped to the deepest level whose extents still fit the
/// window; the input is rejected only when even one scale does not fit.
template <typename T>
ad::Var<T> ms_ssim(const ad::Var<T>& x, const ad::Var<T>& y, const LossConfig& cfg);

/// alpha*(1 - ms_ssim) + (1-alpha)*l1.
template <typename T>
ad::Var<T> l_d(const ad::Var<T>& x, const ad::Var<T>& y, const LossConfig& cfg);

/// Scale-consistency term: mean over the batch of L_d(f(f_crop(I)), I).
template <typename T>
ad::Var<T> loss_ss(const model::Network<T>& f, const Tensor<T>& lr_batch, const LossConfig& cfg);

/// Re-degradation term: mean over the batch of L_d(f_crop(f(I)), I), with the
/// differentiable f_crop.
template <typename T>
ad::Var<T> loss_fid(const model::Network<T>& f, const Tensor<T>& lr_batch, const LossConfig& cfg);

/// g objective: mean over the batch of L_d(g(f_crop(I)), sinc(I)); the sinc
/// targets are constants.
template <typename T>
ad::Var<T> loss_g(const model::Network<T>& g, const Tensor<T>& batch, const kspace::SincKernel& kernel,
                  const LossConfig& cfg);

/// Sinc-consistency hinge: mean over the batch of
/// max(L_d(sinc(f(I)), g(I)), hinge_floor), with g's output detached.
template <typename T>
ad::Var<T> loss_sinc(const model::Network<T>& f, const model::Network<T>& g, const Tensor<T>& batch,
                     const kspace::SincKernel& kernel, const LossConfig& cfg);

template <typename T>
struct TotalLoss {
  ad::Var<T> total;
  double l_ss = 0.0;
  double l_f = 0.0;
  double l_sinc = 0.0;
  bool has_fid = false;
  bool has_sinc = false;
};

/// L_ss + beta*L_f + gamma*L_sinc, where the sinc hinge is evaluated on both
/// the I_LR batch and its f-cropped children with equal weight. Forward
/// passes of f are shared between the terms. g may be null when with_sinc is
/// false.
template <typename T>
TotalLoss<T> loss_total(const model::Network<T>& f, const model::Network<T>* g, const Tensor<T>& lr_batch,
                        const kspace::SincKernel& kernel, const LossConfig& cfg, bool with_fid = true,
                        bool with_sinc = true);

}  // namespace losses
}  // namespace usrgr

#include "usrgr/losses.hpp"

#include <cmath>
#include <cstring>

namespace usrgr {
namespace losses {

namespace {

constexpr double kCanonicalWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr double kTermFloor = 1e-8;  // keeps pow bases positive for anticorrelated inputs

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const int c = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

template <typename T>
Tensor<T> batch_f_crop(const Tensor<T>& batch, int factor = 2) {
  const int b = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  Tensor<T> out({b, c, h / factor, w / factor});
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      Tensor<T> slice({h, w});
      std::memcpy(slice.data(), &batch.at(bi, ci, 0, 0), sizeof(T) * slice.size());
      Tensor<T> small = kspace::f_crop(slice, factor);
      std::memcpy(&out.at(bi, ci, 0, 0), small.data(), sizeof(T) * small.size());
    }
  return out;
}

template <typename T>
Tensor<T> batch_sinc(const Tensor<T>& batch, const kspace::SincKernel& kernel) {
  const int b = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  Tensor<T> out({b, c, h / kernel.factor, w / kernel.factor});
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      Tensor<T> slice({h, w});
      std::memcpy(slice.data(), &batch.at(bi, ci, 0, 0), sizeof(T) * slice.size());
      Tensor<T> small = kspace::sinc_downsample(slice, kernel, kernel.factor);
      std::memcpy(&out.at(bi, ci, 0, 0), small.data(), sizeof(T) * small.size());
    }
  return out;
}

}  // namespace

std::vector<double> LossConfig::scale_weights() const {
  std::vector<double> w = msssim_weights;
  if (w.empty()) {
    if (msssim_scales < 1 || msssim_scales > 5)
      throw ShapeError("LossConfig: msssim_scales must be in [1,5] without explicit weights");
    w.assign(kCanonicalWeights, kCanonicalWeights + msssim_scales);
  }
  double sum = 0.0;
  for (double v : w) sum += v;
  for (double& v : w) v /= sum;
  return w;
}

void LossConfig::validate() const {
  if (alpha < 0.0 || alpha > 1.0) throw ShapeError("LossConfig: alpha must be in [0,1]");
  if (!msssim_weights.empty()) {
    if (static_cast<int>(msssim_weights.size()) != msssim_scales)
      throw ShapeError("LossConfig: msssim_weights length must equal msssim_scales");
    double sum = 0.0;
    for (double v : msssim_weights) sum += v;
    if (std::abs(sum - 1.0) > 1e-9) throw ShapeError("LossConfig: msssim_weights must sum to 1");
  }
  if (msssim_scales < 1) throw ShapeError("LossConfig: msssim_scales must be >= 1");
  if (ssim_window < 3 || ssim_window % 2 == 0) throw ShapeError("LossConfig: ssim_window must be odd and >= 3");
  if (hinge_floor < 0.0) throw ShapeError("LossConfig: hinge_floor must be >= 0");
}

template <typename T>
ad::Var<T> l1(const ad::Var<T>& x, const ad::Var<T>& y) {
  return ad::mean(ad::abs(ad::sub(x, y)));
}

template <typename T>
ad::Var<T> ms_ssim(const ad::Var<T>& x, const ad::Var<T>& y, const LossConfig& cfg) {
  ad::check_same_shape(x, y, "ms_ssim");
  if (x->value.rank() != 4) throw ShapeError("ms_ssim: inputs must be [B,C,H,W]");
  const int h = x->value.dim(2), w = x->value.dim(3);
  const int win = cfg.ssim_window;
  if (h < win || w < win)
    throw ShapeError("ms_ssim: extents " + std::to_string(h) + "x" + std::to_string(w) +
                     " below minimal valid extent " + std::to_string(win));

  int scales = 1;
  {
    int ch = h, cw = w;
    while (scales < cfg.msssim_scales && ch % 2 == 0 && cw % 2 == 0 && ch / 2 >= win && cw / 2 >= win) {
      ch /= 2;
      cw /= 2;
      ++scales;
    }
  }
  std::vector<double> weights = cfg.scale_weights();
  weights.resize(static_cast<std::size_t>(scales));
  double sum = 0.0;
  for (double v : weights) sum += v;
  for (double& v : weights) v /= sum;

  const std::vector<double> window = gaussian_window(win, cfg.ssim_sigma);
  const T c1 = static_cast<T>(0.01 * cfg.dynamic_range * 0.01 * cfg.dynamic_range);
  const T c2 = static_cast<T>(0.03 * cfg.dynamic_range * 0.03 * cfg.dynamic_range);

  ad::Var<T> xs = x, ys = y;
  ad::Var<T> result = ad::constant(Tensor<T>::scalar(T(1)));
  for (int s = 0; s < scales; ++s) {
    ad::Var<T> mx = ad::sep_filter_valid(xs, window);
    ad::Var<T> my = ad::sep_filter_valid(ys, window);
    ad::Var<T> mxx = ad::mul(mx, mx);
    ad::Var<T> myy = ad::mul(my, my);
    ad::Var<T> mxy = ad::mul(mx, my);
    ad::Var<T> sx = ad::sub(ad::sep_filter_valid(ad::mul(xs, xs), window), mxx);
    ad::Var<T> sy = ad::sub(ad::sep_filter_valid(ad::mul(ys, ys), window), myy);
    ad::Var<T> sxy = ad::sub(ad::sep_filter_valid(ad::mul(xs, ys), window), mxy);

    ad::Var<T> cs_map = ad::div(ad::affine(sxy, T(2), c2), ad::affine(ad::add(sx, sy), T(1), c2));
    ad::Var<T> cs = ad::max_with(ad::mean(cs_map), static_cast<T>(kTermFloor));
    result = ad::mul(result, ad::pow_const(cs, static_cast<T>(weights[static_cast<std::size_t>(s)])));

    if (s + 1 == scales) {
      ad::Var<T> lum_map = ad::div(ad::affine(mxy, T(2), c1), ad::affine(ad::add(mxx, myy), T(1), c1));
      ad::Var<T> lum = ad::max_with(ad::mean(lum_map), static_cast<T>(kTermFloor));
      result = ad::mul(result, ad::pow_const(lum, static_cast<T>(weights[static_cast<std::size_t>(s)])));
    } else {
      xs = ad::avg_pool2(xs);
      ys = ad::avg_pool2(ys);
    }
  }
  return result;
}

template <typename T>
ad::Var<T> l_d(const ad::Var<T>& x, const ad::Var<T>& y, const LossConfig& cfg) {
  const T alpha = static_cast<T>(cfg.alpha);
  ad::Var<T> structural = ad::affine(ms_ssim(x, y, cfg), T(-1), T(1));  // 1 - ms_ssim
  if (cfg.alpha >= 1.0) return structural;
  if (cfg.alpha <= 0.0) return l1(x, y);
  return ad::add(ad::scale(structural, alpha), ad::scale(l1(x, y), T(1) - alpha));
}

template <typename T>
ad::Var<T> loss_ss(const model::Network<T>& f, const Tensor<T>& lr_batch, const LossConfig& cfg) {
  ad::Var<T> lr = ad::constant(lr_batch);
  ad::Var<T> lr_child = ad::constant(batch_f_crop(lr_batch));
  return l_d(f.forward(lr_child), lr, cfg);
}

template <typename T>
ad::Var<T> loss_fid(const model::Network<T>& f, const Tensor<T>& lr_batch, const LossConfig& cfg) {
  ad::Var<T> lr = ad::constant(lr_batch);
  return l_d(kspace::f_crop_op(f.forward(lr)), lr, cfg);
}

template <typename T>
ad::Var<T> loss_g(const model::Network<T>& g, const Tensor<T>& batch, const kspace::SincKernel& kernel,
                  const LossConfig& cfg) {
  ad::Var<T> input = ad::constant(batch_f_crop(batch));
  ad::Var<T> target = ad::constant(batch_sinc(batch, kernel));
  return l_d(g.forward(input), target, cfg);
}

namespace {

/// Per-item hinge of the sinc consistency: mean_b max(L_d(pred_b, targ_b), a).
template <typename T>
ad::Var<T> sinc_hinge_mean(const ad::Var<T>& pred, const ad::Var<T>& targ, const LossConfig& cfg) {
  const int b = pred->value.dim(0);
  const T a = static_cast<T>(cfg.hinge_floor);
  ad::Var<T> acc;
  for (int bi = 0; bi < b; ++bi) {
    ad::Var<T> term = ad::max_with(l_d(ad::select_item(pred, bi), ad::select_item(targ, bi), cfg), a);
    acc = bi == 0 ? term : ad::add(acc, term);
  }
  return ad::scale(acc, T(1) / static_cast<T>(b));
}

}  // namespace

template <typename T>
ad::Var<T> loss_sinc(const model::Network<T>& f, const model::Network<T>& g, const Tensor<T>& batch,
                     const kspace::SincKernel& kernel, const LossConfig& cfg) {
  ad::Var<T> input = ad::constant(batch);
  ad::Var<T> pred = kspace::sinc_downsample_op(f.forward(input), kernel);
  ad::Var<T> targ = ad::detach(g.forward(input));
  return sinc_hinge_mean(pred, targ, cfg);
}

template <typename T>
TotalLoss<T> loss_total(const model::Network<T>& f, const model::Network<T>* g, const Tensor<T>& lr_batch,
                        const kspace::SincKernel& kernel, const LossConfig& cfg, bool with_fid, bool with_sinc) {
  if (with_sinc && g == nullptr) throw ShapeError("loss_total: sinc term requires g");
  TotalLoss<T> out;
  out.has_fid = with_fid;
  out.has_sinc = with_sinc;

  const Tensor<T> lr_child_value = batch_f_crop(lr_batch);
  ad::Var<T> lr = ad::constant(lr_batch);
  ad::Var<T> lr_child = ad::constant(lr_child_value);

  ad::Var<T> pred_from_child = f.forward(lr_child);  // shared by L_ss and the sinc child branch
  ad::Var<T> ss = l_d(pred_from_child, lr, cfg);
  out.l_ss = static_cast<double>(ss->value[0]);
  ad::Var<T> total = ss;

  ad::Var<T> pred_hr;  // f(I_LR), shared by L_f and the sinc parent branch
  if (with_fid || with_sinc) pred_hr = f.forward(lr);

  if (with_fid) {
    ad::Var<T> fid = l_d(kspace::f_crop_op(pred_hr), lr, cfg);
    out.l_f = static_cast<double>(fid->value[0]);
    total = ad::add(total, ad::scale(fid, static_cast<T>(cfg.beta)));
  }
  if (with_sinc) {
    ad::Var<T> parent = sinc_hinge_mean(kspace::sinc_downsample_op(pred_hr, kernel),
                                        ad::detach(g->forward(lr)), cfg);
    ad::Var<T> child = sinc_hinge_mean(kspace::sinc_downsample_op(pred_from_child, kernel),
                                       ad::detach(g->forward(lr_child)), cfg);
    ad::Var<T> sinc = ad::scale(ad::add(parent, child), T(0.5));
    out.l_sinc = static_cast<double>(sinc->value[0]);
    total = ad::add(total, ad::scale(sinc, static_cast<T>(cfg.gamma)));
  }
  out.total = total;
  return out;
}

#define USRGR_LOSSES_INSTANTIATE(T)                                                                       \
  template ad::Var<T> l1<T>(const ad::Var<T>&, const ad::Var<T>&);                                        \
  template ad::Var<T> ms_ssim<T>(const ad::Var<T>&, const ad::Var<T>&, const LossConfig&);                \
  template ad::Var<T> l_d<T>(const ad::Var<T>&, const ad::Var<T>&, const LossConfig&);                    \
  template ad::Var<T> loss_ss<T>(const model::Network<T>&, const Tensor<T>&, const LossConfig&);          \
  template ad::Var<T> loss_fid<T>(const model::Network<T>&, const Tensor<T>&, const LossConfig&);         \
  template ad::Var<T> loss_g<T>(const model::Network<T>&, const Tensor<T>&, const kspace::SincKernel&,    \
                                const LossConfig&);                                                       \
  template ad::Var<T> loss_sinc<T>(const model::Network<T>&, const model::Network<T>&, const Tensor<T>&,  \
                                   const kspace::SincKernel&, const LossConfig&);                         \
  template TotalLoss<T> loss_total<T>(const model::Network<T>&, const model::Network<T>*, const Tensor<T>&, \
                                      const kspace::SincKernel&, const LossConfig&, bool, bool);

USRGR_LOSSES_INSTANTIATE(float)
USRGR_LOSSES_INSTANTIATE(double)

}  // namespace losses
}  // namespace usrgr

#include "usrgr/kspace.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <map>
#include <mutex>

#include "usrgr/rng.hpp"

namespace usrgr {
namespace kspace {

namespace {

constexpr double kPi = 3.14159265358979323846;

// FFTW plan creation is not thread-safe; execution on distinct buffers is.
// Plans are cached per (h, w, sign) and created with FFTW_UNALIGNED so they
// can run on any buffer.
class FftPlans {
 public:
  static FftPlans& instance() {
    static FftPlans p;
    return p;
  }

  void execute(int h, int w, int sign, std::complex<double>* data) {
    fftw_plan plan = nullptr;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto key = std::make_tuple(h, w, sign);
      auto it = plans_.find(key);
      if (it == plans_.end()) {
        std::vector<std::complex<double>> probe(static_cast<std::size_t>(h) * w);
        plan = fftw_plan_dft_2d(h, w, reinterpret_cast<fftw_complex*>(probe.data()),
                                reinterpret_cast<fftw_complex*>(probe.data()), sign,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_[key] = plan;
      } else {
        plan = it->second;
      }
    }
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(data), reinterpret_cast<fftw_complex*>(data));
  }

 private:
  FftPlans() = default;
  std::mutex mu_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

// fftshift/ifftshift for even extents are the same index swap.
void shift_center(ComplexGrid& g) {
  const int h = g.height, w = g.width;
  ComplexGrid out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.at((r + h / 2) % h, (c + w / 2) % w) = g.at(r, c);
  g = std::move(out);
}

void check_even_extents(int h, int w, int mult, const char* who) {
  if (h < 2 || w < 2) throw ShapeError(std::string(who) + ": extents must be >= 2");
  if (h % mult != 0 || w % mult != 0)
    throw ShapeError(std::string(who) + ": extents " + std::to_string(h) + "x" + std::to_string(w) +
                     " must be divisible by " + std::to_string(mult));
}

}  // namespace

template <typename T>
ComplexGrid dft2(const Tensor<T>& img) {
  if (img.rank() != 2) throw ShapeError("dft2: input must be 2D [H,W]");
  const int h = img.dim(0), w = img.dim(1);
  check_even_extents(h, w, 2, "dft2");
  ComplexGrid g(h, w);
  for (std::size_t i = 0; i < img.size(); ++i) g.data[i] = static_cast<double>(img[i]);
  FftPlans::instance().execute(h, w, FFTW_FORWARD, g.data.data());
  const double norm = 1.0 / std::sqrt(static_cast<double>(h) * w);
  for (auto& v : g.data) v *= norm;
  shift_center(g);
  return g;
}

template <typename T>
Tensor<T> idft2(const ComplexGrid& grid, double* max_imag) {
  ComplexGrid g = grid;
  shift_center(g);  // even extents: ifftshift == fftshift
  FftPlans::instance().execute(g.height, g.width, FFTW_BACKWARD, g.data.data());
  const double norm = 1.0 / std::sqrt(static_cast<double>(g.height) * g.width);
  Tensor<T> out({g.height, g.width});
  double imag_peak = 0.0;
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const std::complex<double> v = g.data[i] * norm;
    out[i] = static_cast<T>(v.real());
    imag_peak = std::max(imag_peak, std::abs(v.imag()));
  }
  if (max_imag) *max_imag = imag_peak;
  return out;
}

namespace {

// Crop the centered (hs x ws) block plus one extra row/col covering the
// +Nyquist partners, then fold those partners into the -Nyquist line with
// weight 1/2 per axis, then scale by 1/factor (mean preservation under the
// unitary pair).
ComplexGrid crop_fold(const ComplexGrid& big, int factor) {
  const int h = big.height, w = big.width;
  const int hs = h / factor, ws = w / factor;
  const int r0 = h / 2 - hs / 2, c0 = w / 2 - ws / 2;
  ComplexGrid out(hs, ws);
  const double s = 1.0 / factor;
  for (int r = 0; r < hs; ++r) {
    for (int c = 0; c < ws; ++c) {
      std::complex<double> v;
      if (r == 0 && c == 0)
        v = 0.25 * (big.at(r0, c0) + big.at(r0 + hs, c0) + big.at(r0, c0 + ws) + big.at(r0 + hs, c0 + ws));
      else if (r == 0)
        v = 0.5 * (big.at(r0, c0 + c) + big.at(r0 + hs, c0 + c));
      else if (c == 0)
        v = 0.5 * (big.at(r0 + r, c0) + big.at(r0 + r, c0 + ws));
      else
        v = big.at(r0 + r, c0 + c);
      out.at(r, c) = s * v;
    }
  }
  return out;
}

// Transpose of crop_fold as a real-linear map on the centered big grid.
void unfold_scatter(const ComplexGrid& small, int factor, ComplexGrid& big) {
  const int h = big.height, w = big.width;
  const int hs = small.height, ws = small.width;
  const int r0 = h / 2 - hs / 2, c0 = w / 2 - ws / 2;
  const double s = 1.0 / factor;
  for (int r = 0; r < hs; ++r) {
    for (int c = 0; c < ws; ++c) {
      const std::complex<double> v = s * small.at(r, c);
      const bool nr = (r == 0), nc = (c == 0);
      if (nr && nc) {
        big.at(r0, c0) += 0.25 * v;
        big.at(r0 + hs, c0) += 0.25 * v;
        big.at(r0, c0 + ws) += 0.25 * v;
        big.at(r0 + hs, c0 + ws) += 0.25 * v;
      } else if (nr) {
        big.at(r0, c0 + c) += 0.5 * v;
        big.at(r0 + hs, c0 + c) += 0.5 * v;
      } else if (nc) {
        big.at(r0 + r, c0) += 0.5 * v;
        big.at(r0 + r, c0 + ws) += 0.5 * v;
      } else {
        big.at(r0 + r, c0 + c) += v;
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> f_crop(const Tensor<T>& img, int factor) {
  if (img.rank() != 2) throw ShapeError("f_crop: input must be 2D [H,W]");
  if (factor < 2) throw ShapeError("f_crop: factor must be >= 2");
  check_even_extents(img.dim(0), img.dim(1), 2 * factor, "f_crop");
  ComplexGrid spec = dft2(img);
  ComplexGrid small = crop_fold(spec, factor);
  return idft2<T>(small);
}

template <typename T>
Tensor<T> f_crop_adjoint(const Tensor<T>& img, int factor, int out_h, int out_w) {
  if (img.rank() != 2) throw ShapeError("f_crop_adjoint: input must be 2D [H,W]");
  if (out_h != img.dim(0) * factor || out_w != img.dim(1) * factor)
    throw ShapeError("f_crop_adjoint: output extents must be factor * input extents");
  ComplexGrid small = dft2(img);
  ComplexGrid big(out_h, out_w);
  unfold_scatter(small, factor, big);
  return idft2<T>(big);
}

SincKernel build_sinc_kernel(int taps, int factor, int period) {
  if (taps <= 0 || taps % 2 == 0) throw ShapeError("build_sinc_kernel: taps must be odd and positive");
  if (factor < 2) throw ShapeError("build_sinc_kernel: factor must be >= 2");
  SincKernel k;
  k.taps = taps;
  k.factor = factor;
  k.values.resize(static_cast<std::size_t>(taps));
  const int half = taps / 2;
  if (period > 0) {
    if (period % (2 * factor) != 0) throw ShapeError("build_sinc_kernel: period must be divisible by 2*factor");
    if (taps > period) throw ShapeError("build_sinc_kernel: taps exceed period");
    const int m = period / (2 * factor);  // per-axis Nyquist of the decimated grid
    for (int u = -half; u <= half; ++u) {
      double s = 1.0;  // k = 0
      for (int kk = 1; kk < m; ++kk) s += 2.0 * std::cos(2.0 * kPi * kk * u / period);
      s += std::cos(2.0 * kPi * m * u / period);  // half weight at both +-m
      k.values[static_cast<std::size_t>(u + half)] = s / period;
    }
  } else {
    for (int u = -half; u <= half; ++u)
      k.values[static_cast<std::size_t>(u + half)] =
          u == 0 ? 1.0 / factor : std::sin(kPi * u / factor) / (kPi * u);
  }
  double sum = 0.0;
  for (double v : k.values) sum += v;
  for (double& v : k.values) v /= sum;
  return k;
}

namespace {

template <typename T>
void sinc_pass_width(const Tensor<T>& in, const std::vector<double>& h, int factor, Tensor<T>& out) {
  const int rows = in.dim(0), w = in.dim(1), ws = w / factor;
  const int c = static_cast<int>(h.size()) / 2;
  out = Tensor<T>({rows, ws});
  for (int y = 0; y < rows; ++y)
    for (int m = 0; m < ws; ++m) {
      double s = 0.0;
      for (int i = 0; i < static_cast<int>(h.size()); ++i) {
        int xx = (factor * m + i - c) % w;
        if (xx < 0) xx += w;
        s += h[static_cast<std::size_t>(i)] * static_cast<double>(in.at(y, xx));
      }
      out.at(y, m) = static_cast<T>(s);
    }
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& in) {
  Tensor<T> out({in.dim(1), in.dim(0)});
  for (int r = 0; r < in.dim(0); ++r)
    for (int c = 0; c < in.dim(1); ++c) out.at(c, r) = in.at(r, c);
  return out;
}

}  // namespace

template <typename T>
Tensor<T> sinc_downsample(const Tensor<T>& img, const SincKernel& kernel, int factor) {
  if (img.rank() != 2) throw ShapeError("sinc_downsample: input must be 2D [H,W]");
  const int h = img.dim(0), w = img.dim(1);
  if (h % factor != 0 || w % factor != 0) throw ShapeError("sinc_downsample: extents not divisible by factor");
  if (kernel.taps > h || kernel.taps > w)
    throw ShapeError("sinc_downsample: kernel taps " + std::to_string(kernel.taps) + " exceed image extent");
  Tensor<T> mid;
  sinc_pass_width(img, kernel.values, factor, mid);            // [H, W/f]
  Tensor<T> midT = transpose2d(mid);                           // [W/f, H]
  Tensor<T> outT;
  sinc_pass_width(midT, kernel.values, factor, outT);          // [W/f, H/f]
  return transpose2d(outT);
}

template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, int out_h, int out_w) {
  if (img.rank() != 2) throw ShapeError("bicubic_resize: input must be 2D [H,W]");
  if (out_h <= 0 || out_w <= 0) throw ShapeError("bicubic_resize: output extents must be positive");

  auto keys = [](double t) {
    const double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
  };

  auto resize_axis = [&](const Tensor<T>& in, int out_n) {
    // resample along width; caller transposes for the other axis
    const int rows = in.dim(0), n = in.dim(1);
    Tensor<T> out({rows, out_n});
    const double step = static_cast<double>(n) / out_n;
    for (int x = 0; x < out_n; ++x) {
      const double s = (x + 0.5) * step - 0.5;
      const int i0 = static_cast<int>(std::floor(s));
      const double f = s - i0;
      double wgt[4] = {keys(f + 1.0), keys(f), keys(1.0 - f), keys(2.0 - f)};
      int idx[4];
      for (int t = 0; t < 4; ++t) idx[t] = std::min(std::max(i0 - 1 + t, 0), n - 1);
      for (int y = 0; y < rows; ++y) {
        double acc = 0.0;
        for (int t = 0; t < 4; ++t) acc += wgt[t] * static_cast<double>(in.at(y, idx[t]));
        out.at(y, x) = static_cast<T>(acc);
      }
    }
    return out;
  };

  Tensor<T> pass1 = resize_axis(img, out_w);
  Tensor<T> pass2 = resize_axis(transpose2d(pass1), out_h);
  return transpose2d(pass2);
}

template <typename T>
Tensor<T> degrade(const Tensor<T>& img, const DegradeConfig& cfg, std::uint64_t seed) {
  if (cfg.factor < 2) throw ShapeError("degrade: factor must be >= 2");
  Tensor<T> out = f_crop(img, cfg.factor);
  if (cfg.noise_sigma > 0.0) {
    Rng rng(seed);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += static_cast<T>(cfg.noise_sigma * rng.gaussian());
  }
  return out;
}

// ---- differentiable wrappers ----

template <typename T>
ad::Var<T> f_crop_op(const ad::Var<T>& x, int factor) {
  if (x->value.rank() != 4) throw ShapeError("f_crop_op: input must be [B,C,H,W]");
  const int b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  check_even_extents(h, w, 2 * factor, "f_crop_op");
  const int hs = h / factor, ws = w / factor;
  Tensor<T> y({b, c, hs, ws});
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      Tensor<T> slice({h, w});
      std::memcpy(slice.data(), &x->value.at(bi, ci, 0, 0), sizeof(T) * slice.size());
      Tensor<T> small = f_crop(slice, factor);
      std::memcpy(&y.at(bi, ci, 0, 0), small.data(), sizeof(T) * small.size());
    }
  return ad::make_node<T>(std::move(y), {x}, "f_crop", [x, factor, b, c, h, w, hs, ws](ad::Node<T>& n) {
    ad::ensure_grad(*x);
    for (int bi = 0; bi < b; ++bi)
      for (int ci = 0; ci < c; ++ci) {
        Tensor<T> gslice({hs, ws});
        std::memcpy(gslice.data(), &n.grad.at(bi, ci, 0, 0), sizeof(T) * gslice.size());
        Tensor<T> gx = f_crop_adjoint(gslice, factor, h, w);
        T* dst = &x->grad.at(bi, ci, 0, 0);
        for (std::size_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
      }
  });
}

template <typename T>
ad::Var<T> sinc_downsample_op(const ad::Var<T>& x, const SincKernel& kernel) {
  if (x->value.rank() != 4) throw ShapeError("sinc_downsample_op: input must be [B,C,H,W]");
  const int factor = kernel.factor;
  const int b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (h % factor || w % factor) throw ShapeError("sinc_downsample_op: extents not divisible by factor");
  const int hs = h / factor, ws = w / factor;
  Tensor<T> y({b, c, hs, ws});
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      Tensor<T> slice({h, w});
      std::memcpy(slice.data(), &x->value.at(bi, ci, 0, 0), sizeof(T) * slice.size());
      Tensor<T> small = sinc_downsample(slice, kernel, factor);
      std::memcpy(&y.at(bi, ci, 0, 0), small.data(), sizeof(T) * small.size());
    }
  std::vector<double> taps = kernel.values;
  return ad::make_node<T>(std::move(y), {x}, "sinc_down", [x, taps, factor, b, c, h, w, hs, ws](ad::Node<T>& n) {
    ad::ensure_grad(*x);
    const int kt = static_cast<int>(taps.size()), half = kt / 2;
    for (int bi = 0; bi < b; ++bi)
      for (int ci = 0; ci < c; ++ci) {
        // adjoint of (circular separable correlation + decimation)
        Tensor<double> gmid({h, ws});
        for (int l = 0; l < hs; ++l)
          for (int m = 0; m < ws; ++m) {
            const double g = static_cast<double>(n.grad.at(bi, ci, l, m));
            for (int i = 0; i < kt; ++i) {
              int yy = (factor * l + i - half) % h;
              if (yy < 0) yy += h;
              gmid.at(yy, m) += taps[static_cast<std::size_t>(i)] * g;
            }
          }
        for (int yy = 0; yy < h; ++yy)
          for (int m = 0; m < ws; ++m) {
            const double g = gmid.at(yy, m);
            if (g == 0.0) continue;
            for (int j = 0; j < kt; ++j) {
              int xx = (factor * m + j - half) % w;
              if (xx < 0) xx += w;
              x->grad.at(bi, ci, yy, xx) += static_cast<T>(taps[static_cast<std::size_t>(j)] * g);
            }
          }
      }
  });
}

#define USRGR_KSPACE_INSTANTIATE(T)                                                          \
  template ComplexGrid dft2<T>(const Tensor<T>&);                                            \
  template Tensor<T> idft2<T>(const ComplexGrid&, double*);                                  \
  template Tensor<T> f_crop<T>(const Tensor<T>&, int);                                       \
  template Tensor<T> f_crop_adjoint<T>(const Tensor<T>&, int, int, int);                     \
  template Tensor<T> sinc_downsample<T>(const Tensor<T>&, const SincKernel&, int);           \
  template Tensor<T> bicubic_resize<T>(const Tensor<T>&, int, int);                          \
  template Tensor<T> degrade<T>(const Tensor<T>&, const DegradeConfig&, std::uint64_t);      \
  template ad::Var<T> f_crop_op<T>(const ad::Var<T>&, int);                                  \
  template ad::Var<T> sinc_downsample_op<T>(const ad::Var<T>&, const SincKernel&);

USRGR_KSPACE_INSTANTIATE(float)
USRGR_KSPACE_INSTANTIATE(double)

}  // namespace kspace
}  // namespace usrgr

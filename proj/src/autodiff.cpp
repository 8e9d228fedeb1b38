#include "usrgr/autodiff.hpp"

#include <cstring>
#include <unordered_set>

#include "usrgr/gemm.hpp"

namespace usrgr {
namespace ad {

template <typename T>
void backward(const Var<T>& root) {
  if (root->value.size() != 1) throw ShapeError("backward: root must be scalar-valued");

  // Iterative post-order DFS; parents expanded in declaration order so the
  // accumulation order is fixed for a fixed graph.
  std::vector<Node<T>*> order;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  std::unordered_set<Node<T>*> seen;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) n->grad = Tensor<T>(n->value.shape());
  root->grad[0] = T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->requires_grad && n->backprop) n->backprop(*n);
  }
}

// ---- conv core: im2col + GEMM, one batch item at a time ----

namespace {

// col is [Cin*kh*kw, H*W] row-major for one batch item.
template <typename T>
void im2col(const T* x, int cin, int h, int w, int kh, int kw, T* col) {
  const int ph = kh / 2, pw = kw / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < cin; ++ci) {
    const T* src = x + ci * plane;
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx) {
        T* row = col + ((static_cast<std::size_t>(ci) * kh + dy) * kw + dx) * plane;
        const int oy = dy - ph, ox = dx - pw;
        for (int y = 0; y < h; ++y) {
          T* dst = row + static_cast<std::size_t>(y) * w;
          const int yy = y + oy;
          if (yy < 0 || yy >= h) {
            std::memset(dst, 0, sizeof(T) * w);
            continue;
          }
          const int x0 = std::max(0, -ox), x1 = std::min(w, w - ox);
          if (x0 > 0) std::memset(dst, 0, sizeof(T) * x0);
          if (x1 > x0) std::memcpy(dst + x0, src + static_cast<std::size_t>(yy) * w + x0 + ox, sizeof(T) * (x1 - x0));
          if (x1 < w) std::memset(dst + x1, 0, sizeof(T) * (w - x1));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int cin, int h, int w, int kh, int kw, T* x) {
  const int ph = kh / 2, pw = kw / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < cin; ++ci) {
    T* dst_plane = x + ci * plane;
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx) {
        const T* row = col + ((static_cast<std::size_t>(ci) * kh + dy) * kw + dx) * plane;
        const int oy = dy - ph, ox = dx - pw;
        for (int y = 0; y < h; ++y) {
          const int yy = y + oy;
          if (yy < 0 || yy >= h) continue;
          const int x0 = std::max(0, -ox), x1 = std::min(w, w - ox);
          const T* srow = row + static_cast<std::size_t>(y) * w;
          T* drow = dst_plane + static_cast<std::size_t>(yy) * w + ox;
          for (int xx = x0; xx < x1; ++xx) drow[xx] += srow[xx];
        }
      }
    }
  }
}

template <typename T>
std::vector<T>& col_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int kh, int kw, Tensor<T>& y) {
  const int b = x.dim(0), cin = x.dim(1), h = x.dim(2), ww = x.dim(3);
  const int cout = w.dim(0);
  const std::size_t plane = static_cast<std::size_t>(h) * ww;
  const std::size_t rows = static_cast<std::size_t>(cin) * kh * kw;
  auto& col = col_scratch<T>();
  if (col.size() < rows * plane) col.resize(rows * plane);

  y = Tensor<T>({b, cout, h, ww});
  for (int bi = 0; bi < b; ++bi) {
    const T* xi = x.data() + static_cast<std::size_t>(bi) * cin * plane;
    T* yi = y.data() + static_cast<std::size_t>(bi) * cout * plane;
    if (kh == 1 && kw == 1) {
      gemm_nn(false, cout, cin, static_cast<int>(plane), w.data(), xi, yi);
    } else {
      im2col(xi, cin, h, ww, kh, kw, col.data());
      gemm_nn(false, cout, static_cast<int>(rows), static_cast<int>(plane), w.data(), col.data(), yi);
    }
    for (int co = 0; co < cout; ++co) {
      const T bv = bias[static_cast<std::size_t>(co)];
      T* row = yi + co * plane;
      for (std::size_t p = 0; p < plane; ++p) row[p] += bv;
    }
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, int kh, int kw, const Tensor<T>& gy, Tensor<T>* gx,
                     Tensor<T>* gw, Tensor<T>* gbias) {
  const int b = x.dim(0), cin = x.dim(1), h = x.dim(2), ww = x.dim(3);
  const int cout = w.dim(0);
  const std::size_t plane = static_cast<std::size_t>(h) * ww;
  const std::size_t rows = static_cast<std::size_t>(cin) * kh * kw;
  auto& col = col_scratch<T>();
  if (col.size() < rows * plane) col.resize(rows * plane);
  std::vector<T> dcol;
  if (gx && !(kh == 1 && kw == 1)) dcol.resize(rows * plane);

  for (int bi = 0; bi < b; ++bi) {
    const T* xi = x.data() + static_cast<std::size_t>(bi) * cin * plane;
    const T* gyi = gy.data() + static_cast<std::size_t>(bi) * cout * plane;
    if (gbias) {
      for (int co = 0; co < cout; ++co) {
        const T* row = gyi + co * plane;
        T s = T(0);
        for (std::size_t p = 0; p < plane; ++p) s += row[p];
        (*gbias)[static_cast<std::size_t>(co)] += s;
      }
    }
    if (kh == 1 && kw == 1) {
      if (gw) gemm_nt(true, cout, static_cast<int>(plane), cin, gyi, xi, gw->data());
      if (gx)
        gemm_tn(true, cin, cout, static_cast<int>(plane), w.data(), gyi,
                gx->data() + static_cast<std::size_t>(bi) * cin * plane);
    } else {
      if (gw || gx) im2col(xi, cin, h, ww, kh, kw, col.data());
      if (gw) gemm_nt(true, cout, static_cast<int>(plane), static_cast<int>(rows), gyi, col.data(), gw->data());
      if (gx) {
        gemm_tn(false, static_cast<int>(rows), cout, static_cast<int>(plane), w.data(), gyi, dcol.data());
        col2im_add(dcol.data(), cin, h, ww, kh, kw, gx->data() + static_cast<std::size_t>(bi) * cin * plane);
      }
    }
  }
}

namespace {

template <typename T>
Var<T> conv_common(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int kh, int kw, const char* name) {
  if (x->value.rank() != 4) throw ShapeError(std::string(name) + ": input must be [B,C,H,W]");
  const int cin = x->value.dim(1), cout = w->value.dim(0);
  if (w->value.dim(1) != cin)
    throw ShapeError(std::string(name) + ": input channels " + std::to_string(cin) + " do not match kernel " +
                     std::to_string(w->value.dim(1)));
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError(std::string(name) + ": kernel extents must be odd");
  if (bias->value.rank() != 1 || bias->value.dim(0) != cout)
    throw ShapeError(std::string(name) + ": bias must be [Cout]");

  Tensor<T> y;
  conv2d_forward(x->value, w->value, bias->value, kh, kw, y);
  return make_node<T>(std::move(y), {x, w, bias}, name, [x, w, bias, kh, kw](Node<T>& n) {
    Tensor<T>* gx = nullptr;
    Tensor<T>* gw = nullptr;
    Tensor<T>* gb = nullptr;
    if (x->requires_grad) {
      ensure_grad(*x);
      gx = &x->grad;
    }
    if (w->requires_grad) {
      ensure_grad(*w);
      gw = &w->grad;
    }
    if (bias->requires_grad) {
      ensure_grad(*bias);
      gb = &bias->grad;
    }
    conv2d_backward(x->value, w->value, kh, kw, n.grad, gx, gw, gb);
  });
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  if (w->value.rank() != 4) throw ShapeError("conv2d: kernel must be [Cout,Cin,kh,kw]");
  return conv_common(x, w, bias, w->value.dim(2), w->value.dim(3), "conv2d");
}

template <typename T>
Var<T> conv1d_axis(const Var<T>& x, const Var<T>& w, const Var<T>& bias, Axis1d axis) {
  if (w->value.rank() != 3) throw ShapeError("conv1d_axis: kernel must be [Cout,Cin,k]");
  const int k = w->value.dim(2);
  // [Cout,Cin,k] has the same layout as [Cout,Cin,1,k] and [Cout,Cin,k,1].
  if (axis == Axis1d::width) return conv_common(x, w, bias, 1, k, "conv1d_axis");
  return conv_common(x, w, bias, k, 1, "conv1d_axis");
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
  if (x->value.rank() != 4) throw ShapeError("pixel_shuffle: input must be [B,C,H,W]");
  const int b = x->value.dim(0), c_in = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (c_in % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channels " + std::to_string(c_in) + " not divisible by r^2=" +
                     std::to_string(r * r));
  const int c = c_in / (r * r);
  Tensor<T> y({b, c, r * h, r * w});
  for (int bi = 0; bi < b; ++bi)
    for (int co = 0; co < c; ++co)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
              y.at(bi, co, r * yy + i, r * xx + j) = x->value.at(bi, co * r * r + i * r + j, yy, xx);
  return make_node<T>(std::move(y), {x}, "pixel_shuffle", [x, r, c, h, w, b](Node<T>& n) {
    ensure_grad(*x);
    for (int bi = 0; bi < b; ++bi)
      for (int co = 0; co < c; ++co)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j)
            for (int yy = 0; yy < h; ++yy)
              for (int xx = 0; xx < w; ++xx)
                x->grad.at(bi, co * r * r + i * r + j, yy, xx) += n.grad.at(bi, co, r * yy + i, r * xx + j);
  });
}

template <typename T>
Tensor<T> pixel_unshuffle_value(const Tensor<T>& x, int r) {
  const int b = x.dim(0), c = x.dim(1), rh = x.dim(2), rw = x.dim(3);
  if (rh % r != 0 || rw % r != 0) throw ShapeError("pixel_unshuffle: extents not divisible by r");
  const int h = rh / r, w = rw / r;
  Tensor<T> y({b, c * r * r, h, w});
  for (int bi = 0; bi < b; ++bi)
    for (int co = 0; co < c; ++co)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
              y.at(bi, co * r * r + i * r + j, yy, xx) = x.at(bi, co, r * yy + i, r * xx + j);
  return y;
}

template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
  const int b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (h % 2 || w % 2) throw ShapeError("avg_pool2: extents must be even");
  Tensor<T> y({b, c, h / 2, w / 2});
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci)
      for (int yy = 0; yy < h / 2; ++yy)
        for (int xx = 0; xx < w / 2; ++xx)
          y.at(bi, ci, yy, xx) = (x->value.at(bi, ci, 2 * yy, 2 * xx) + x->value.at(bi, ci, 2 * yy, 2 * xx + 1) +
                                  x->value.at(bi, ci, 2 * yy + 1, 2 * xx) + x->value.at(bi, ci, 2 * yy + 1, 2 * xx + 1)) /
                                 T(4);
  return make_node<T>(std::move(y), {x}, "avg_pool2", [x, b, c, h, w](Node<T>& n) {
    ensure_grad(*x);
    for (int bi = 0; bi < b; ++bi)
      for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < h / 2; ++yy)
          for (int xx = 0; xx < w / 2; ++xx) {
            const T g = n.grad.at(bi, ci, yy, xx) / T(4);
            x->grad.at(bi, ci, 2 * yy, 2 * xx) += g;
            x->grad.at(bi, ci, 2 * yy, 2 * xx + 1) += g;
            x->grad.at(bi, ci, 2 * yy + 1, 2 * xx) += g;
            x->grad.at(bi, ci, 2 * yy + 1, 2 * xx + 1) += g;
          }
  });
}

template <typename T>
Var<T> select_item(const Var<T>& x, int b) {
  const int bn = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (b < 0 || b >= bn) throw ShapeError("select_item: index out of range");
  const std::size_t item = static_cast<std::size_t>(c) * h * w;
  Tensor<T> y({1, c, h, w});
  std::memcpy(y.data(), x->value.data() + b * item, sizeof(T) * item);
  return make_node<T>(std::move(y), {x}, "select_item", [x, b, item](Node<T>& n) {
    ensure_grad(*x);
    T* dst = x->grad.data() + b * item;
    for (std::size_t i = 0; i < item; ++i) dst[i] += n.grad[i];
  });
}

template <typename T>
Var<T> sep_filter_valid(const Var<T>& x, const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (h < k || w < k) throw ShapeError("sep_filter_valid: window larger than input");
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<T> win(taps.begin(), taps.end());

  Tensor<T> mid({b, c, h, ow});
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci)
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < ow; ++xx) {
          T s = T(0);
          for (int d = 0; d < k; ++d) s += win[d] * x->value.at(bi, ci, yy, xx + d);
          mid.at(bi, ci, yy, xx) = s;
        }
  Tensor<T> y({b, c, oh, ow});
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx) {
          T s = T(0);
          for (int d = 0; d < k; ++d) s += win[d] * mid.at(bi, ci, yy + d, xx);
          y.at(bi, ci, yy, xx) = s;
        }
  return make_node<T>(std::move(y), {x}, "sep_filter_valid", [x, win, k, b, c, h, w, oh, ow](Node<T>& n) {
    ensure_grad(*x);
    Tensor<T> gmid({b, c, h, ow});
    for (int bi = 0; bi < b; ++bi)
      for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < oh; ++yy)
          for (int xx = 0; xx < ow; ++xx) {
            const T g = n.grad.at(bi, ci, yy, xx);
            for (int d = 0; d < k; ++d) gmid.at(bi, ci, yy + d, xx) += win[d] * g;
          }
    for (int bi = 0; bi < b; ++bi)
      for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < ow; ++xx) {
            const T g = gmid.at(bi, ci, yy, xx);
            for (int d = 0; d < k; ++d) x->grad.at(bi, ci, yy, xx + d) += win[d] * g;
          }
  });
}

#define USRGR_INSTANTIATE(T)                                                                              \
  template void backward<T>(const Var<T>&);                                                               \
  template void conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int,        \
                                  Tensor<T>&);                                                            \
  template void conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, int, int, const Tensor<T>&,       \
                                   Tensor<T>*, Tensor<T>*, Tensor<T>*);                                   \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&);                                 \
  template Var<T> conv1d_axis<T>(const Var<T>&, const Var<T>&, const Var<T>&, Axis1d);                    \
  template Var<T> pixel_shuffle<T>(const Var<T>&, int);                                                   \
  template Tensor<T> pixel_unshuffle_value<T>(const Tensor<T>&, int);                                     \
  template Var<T> avg_pool2<T>(const Var<T>&);                                                            \
  template Var<T> select_item<T>(const Var<T>&, int);                                                     \
  template Var<T> sep_filter_valid<T>(const Var<T>&, const std::vector<double>&);

USRGR_INSTANTIATE(float)
USRGR_INSTANTIATE(double)

}  // namespace ad
}  // namespace usrgr

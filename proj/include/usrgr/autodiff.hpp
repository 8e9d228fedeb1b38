#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "usrgr/tensor.hpp"

namespace usrgr {
namespace ad {

template <typename T>
struct Node;

template <typename T>
using Var = std::shared_ptr<Node<T>>;

/// One vertex of the reverse-mode graph. `backprop` reads this node's grad
/// and accumulates into the parents' grads; it is only installed when some
/// ancestor leaf requires gradients.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<Var<T>> parents;
  std::function<void(Node<T>&)> backprop;
  const char* op = "leaf";
};

template <typename T>
Var<T> constant(Tensor<T> v) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  return n;
}

template <typename T>
Var<T> param(Tensor<T> v) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

/// New constant leaf sharing the current value (stops gradient flow).
template <typename T>
Var<T> detach(const Var<T>& x) {
  return constant(x->value);
}

template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents, const char* op,
                 std::function<void(Node<T>&)> back) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->op = op;
  n->is_leaf = false;
  for (auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(back);
  return n;
}

template <typename T>
inline void ensure_grad(Node<T>& n) {
  if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
}

/// Reverse sweep from a scalar root. Grads of all reachable nodes are reset
/// first, so repeated calls on the same graph give identical results.
template <typename T>
void backward(const Var<T>& root);

// ---- elementwise / reduction ops ----

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw ShapeError(std::string(op) + ": shape mismatch " + Tensor<T>::shape_str(a->value.shape()) + " vs " +
                     Tensor<T>::shape_str(b->value.shape()));
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_node<T>(std::move(out), {a, b}, "add", [a, b](Node<T>& n) {
    if (a->requires_grad) {
      ensure_grad(*a);
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    }
    if (b->requires_grad) {
      ensure_grad(*b);
      for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return make_node<T>(std::move(out), {a, b}, "sub", [a, b](Node<T>& n) {
    if (a->requires_grad) {
      ensure_grad(*a);
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    }
    if (b->requires_grad) {
      ensure_grad(*b);
      for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad[i] -= n.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return make_node<T>(std::move(out), {a, b}, "mul", [a, b](Node<T>& n) {
    if (a->requires_grad) {
      ensure_grad(*a);
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      ensure_grad(*b);
      for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i] * a->value[i];
    }
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a, b, "div");
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] / b->value[i];
  return make_node<T>(std::move(out), {a, b}, "div", [a, b](Node<T>& n) {
    if (a->requires_grad) {
      ensure_grad(*a);
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] / b->value[i];
    }
    if (b->requires_grad) {
      ensure_grad(*b);
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        b->grad[i] -= n.grad[i] * a->value[i] / (b->value[i] * b->value[i]);
    }
  });
}

/// y = s*x + c elementwise.
template <typename T>
Var<T> affine(const Var<T>& a, T s, T c) {
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a->value[i] + c;
  return make_node<T>(std::move(out), {a}, "affine", [a, s](Node<T>& n) {
    ensure_grad(*a);
    for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += s * n.grad[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return affine(a, s, T(0));
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  double s = 0;
  for (std::size_t i = 0; i < a->value.size(); ++i) s += static_cast<double>(a->value[i]);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s / static_cast<double>(a->value.size())));
  return make_node<T>(std::move(out), {a}, "mean", [a](Node<T>& n) {
    ensure_grad(*a);
    const T g = n.grad[0] / static_cast<T>(a->value.size());
    for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
  });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] < T(0) ? -a->value[i] : a->value[i];
  return make_node<T>(std::move(out), {a}, "abs", [a](Node<T>& n) {
    ensure_grad(*a);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const T v = a->value[i];
      a->grad[i] += v > T(0) ? n.grad[i] : (v < T(0) ? -n.grad[i] : T(0));
    }
  });
}

/// max(x, floor) elementwise; zero gradient where the floor is active.
template <typename T>
Var<T> max_with(const Var<T>& a, T floor) {
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] > floor ? a->value[i] : floor;
  return make_node<T>(std::move(out), {a}, "max_with", [a, floor](Node<T>& n) {
    ensure_grad(*a);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (a->value[i] > floor) a->grad[i] += n.grad[i];
  });
}

/// x^p for x > 0 (callers clamp first).
template <typename T>
Var<T> pow_const(const Var<T>& a, T p) {
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(a->value[i], p);
  return make_node<T>(std::move(out), {a}, "pow", [a, p](Node<T>& n) {
    ensure_grad(*a);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      a->grad[i] += n.grad[i] * p * std::pow(a->value[i], p - T(1));
  });
}

/// Subgradient at 0 takes the positive branch. Slope 1 degenerates to the
/// identity map.
template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  if (!(slope > T(0) && slope <= T(1))) throw ShapeError("leaky_relu: slope must be in (0,1]");
  Tensor<T> out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = a->value[i];
    out[i] = v > T(0) ? v : slope * v;
  }
  return make_node<T>(std::move(out), {a}, "leaky_relu", [a, slope](Node<T>& n) {
    ensure_grad(*a);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      a->grad[i] += n.grad[i] * (a->value[i] >= T(0) ? T(1) : slope);
  });
}

// ---- structural ops on NCHW batches ----

enum class Axis1d { height, width };

/// Cross-correlation with zero "same" padding, stride 1, odd kernel extents.
/// x: [B,Cin,H,W], w: [Cout,Cin,kh,kw], bias: [Cout] -> [B,Cout,H,W].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

/// 1D cross-correlation along one spatial axis, mixing channels.
/// w: [Cout,Cin,k]; padding (k-1)/2 along the chosen axis only.
template <typename T>
Var<T> conv1d_axis(const Var<T>& x, const Var<T>& w, const Var<T>& bias, Axis1d axis);

/// [B, C*r^2, H, W] -> [B, C, rH, rW]; out[b,c,r*h+i,r*w+j] = in[b, c*r^2+i*r+j, h, w].
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r);

/// Plain-tensor inverse of pixel_shuffle (test/support helper).
template <typename T>
Tensor<T> pixel_unshuffle_value(const Tensor<T>& x, int r);

/// 2x2 mean pooling, stride 2 (extents must be even).
template <typename T>
Var<T> avg_pool2(const Var<T>& x);

/// Extract batch item b as [1,C,H,W].
template <typename T>
Var<T> select_item(const Var<T>& x, int b);

/// Separable valid-mode correlation with a fixed 1D window along width then
/// height: [B,C,H,W] -> [B,C,H-k+1,W-k+1]. The window is not differentiated.
template <typename T>
Var<T> sep_filter_valid(const Var<T>& x, const std::vector<double>& taps);

// ---- plain-tensor conv kernels (shared with the graph ops) ----

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int kh, int kw, Tensor<T>& y);

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, int kh, int kw, const Tensor<T>& gy, Tensor<T>* gx,
                     Tensor<T>* gw, Tensor<T>* gbias);

}  // namespace ad
}  // namespace usrgr

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usrgr/autodiff.hpp"

namespace usrgr {
namespace model {

enum class BlockKind { wide, plain };
enum class NetKind { sr, g };

struct ModelConfig {
  int channels = 16;  // N
  int num_blocks = 4;
  BlockKind blocks = BlockKind::wide;
  double lrelu_slope = 0.1;
  bool global_skip = false;
};

/// Truncation-toward-zero channel widening used by the residual blocks.
inline int widened(int n) { return static_cast<int>(4.8 * n); }

template <typename T>
struct ConvParams {
  ad::Var<T> w;
  ad::Var<T> b;
};

/// Residual block. Wide variant: 1x1 expand N->6N, LeakyReLU, 1x1 reduce
/// 6N->int(4.8N), 3x3 int(4.8N)->int(4.8N), 1D k=15 along width
/// int(4.8N)->int(4.8N), 1D k=15 along height int(4.8N)->N, plus the skip.
/// Plain variant stops at a 3x3 int(4.8N)->N conv.
template <typename T>
struct ResBlock {
  BlockKind kind = BlockKind::wide;
  ConvParams<T> expand, reduce, spatial;
  ConvParams<T> oned_a, oned_b;  // wide only
};

/// f_theta / g_phi. Both share head (3x3, 1->N) and body; the SR net ends
/// with a 3x3 N->4 tail and a pixel shuffle to 2x resolution, the g net with
/// a 3x3 N->1 tail at the input resolution.
template <typename T>
class Network {
 public:
  /// Seeded initialization: Kaiming fan-in for all convs, zero biases, zero
  /// weights for the final conv of each residual branch (blocks start as
  /// identity maps).
  Network(NetKind kind, ModelConfig cfg, std::uint64_t seed);

  ad::Var<T> forward(const ad::Var<T>& x) const;

  /// Parameters in declaration order (checkpoint and optimizer order).
  std::vector<ad::Var<T>> params() const;

  long param_count() const;

  NetKind kind() const { return kind_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  void build_params();

  NetKind kind_;
  ModelConfig cfg_;
  ConvParams<T> head_, tail_;
  std::vector<ResBlock<T>> body_;
};

template <typename T>
ad::Var<T> srnet_forward(const Network<T>& net, const ad::Var<T>& x) {
  if (net.kind() != NetKind::sr) throw ShapeError("srnet_forward: not an SR network");
  return net.forward(x);
}

template <typename T>
ad::Var<T> gnet_forward(const Network<T>& net, const ad::Var<T>& x) {
  if (net.kind() != NetKind::g) throw ShapeError("gnet_forward: not a g network");
  return net.forward(x);
}

/// Binary checkpoint: magic "USRM", u32 version, config block, parameters in
/// declaration order as little-endian float32 with per-tensor shape headers.
/// Round-trips bit-exactly for float32 networks.
template <typename T>
void save_checkpoint(const std::string& path, const Network<T>& net);

template <typename T>
Network<T> load_checkpoint(const std::string& path);

}  // namespace model
}  // namespace usrgr

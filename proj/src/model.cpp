#include "usrgr/model.hpp"

#include <cstdio>
#include <cstring>

#include "usrgr/rng.hpp"

namespace usrgr {
namespace model {

namespace {

template <typename T>
Tensor<T> kaiming(const std::vector<int>& shape, int fan_in, Rng& rng) {
  Tensor<T> t(shape);
  const double stddev = std::sqrt(2.0 / fan_in);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(stddev * rng.gaussian());
  return t;
}

template <typename T>
ConvParams<T> conv2d_params(int cout, int cin, int k, Rng& rng, bool zero_init = false) {
  Tensor<T> w = zero_init ? Tensor<T>({cout, cin, k, k}) : kaiming<T>({cout, cin, k, k}, cin * k * k, rng);
  return {ad::param(std::move(w)), ad::param(Tensor<T>({cout}))};
}

template <typename T>
ConvParams<T> conv1d_params(int cout, int cin, int k, Rng& rng, bool zero_init = false) {
  Tensor<T> w = zero_init ? Tensor<T>({cout, cin, k}) : kaiming<T>({cout, cin, k}, cin * k, rng);
  return {ad::param(std::move(w)), ad::param(Tensor<T>({cout}))};
}

/// Nearest-neighbour 2x upsample, used only by the optional global skip.
template <typename T>
ad::Var<T> upsample_nearest2(const ad::Var<T>& x) {
  const int b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  Tensor<T> y({b, c, 2 * h, 2 * w});
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci)
      for (int yy = 0; yy < 2 * h; ++yy)
        for (int xx = 0; xx < 2 * w; ++xx) y.at(bi, ci, yy, xx) = x->value.at(bi, ci, yy / 2, xx / 2);
  return ad::make_node<T>(std::move(y), {x}, "upsample_nearest2", [x, b, c, h, w](ad::Node<T>& n) {
    ad::ensure_grad(*x);
    for (int bi = 0; bi < b; ++bi)
      for (int ci = 0; ci < c; ++ci)
        for (int yy = 0; yy < 2 * h; ++yy)
          for (int xx = 0; xx < 2 * w; ++xx) x->grad.at(bi, ci, yy / 2, xx / 2) += n.grad.at(bi, ci, yy, xx);
  });
}

}  // namespace

template <typename T>
Network<T>::Network(NetKind kind, ModelConfig cfg, std::uint64_t seed) : kind_(kind), cfg_(cfg) {
  if (cfg_.channels < 1 || cfg_.num_blocks < 0) throw ShapeError("Network: invalid channels/blocks");
  Rng rng(derive_seed(seed, kind == NetKind::sr ? 0x5C : 0x6D));
  const int n = cfg_.channels;
  const int m = widened(n);
  head_ = conv2d_params<T>(n, 1, 3, rng);
  for (int i = 0; i < cfg_.num_blocks; ++i) {
    ResBlock<T> blk;
    blk.kind = cfg_.blocks;
    blk.expand = conv2d_params<T>(6 * n, n, 1, rng);
    blk.reduce = conv2d_params<T>(m, 6 * n, 1, rng);
    if (blk.kind == BlockKind::wide) {
      blk.spatial = conv2d_params<T>(m, m, 3, rng);
      blk.oned_a = conv1d_params<T>(m, m, 15, rng);
      blk.oned_b = conv1d_params<T>(n, m, 15, rng, /*zero_init=*/true);
    } else {
      blk.spatial = conv2d_params<T>(n, m, 3, rng, /*zero_init=*/true);
    }
    body_.push_back(std::move(blk));
  }
  tail_ = conv2d_params<T>(kind == NetKind::sr ? 4 : 1, n, 3, rng);
}

template <typename T>
ad::Var<T> Network<T>::forward(const ad::Var<T>& x) const {
  if (x->value.rank() != 4 || x->value.dim(1) != 1)
    throw ShapeError("forward: input must be single-channel [B,1,H,W]");
  if (kind_ == NetKind::sr && (x->value.dim(2) < 4 || x->value.dim(3) < 4))
    throw ShapeError("forward: SR input extents must be >= 4");
  const T slope = static_cast<T>(cfg_.lrelu_slope);

  ad::Var<T> h = ad::conv2d(x, head_.w, head_.b);
  for (const ResBlock<T>& blk : body_) {
    ad::Var<T> t = ad::conv2d(h, blk.expand.w, blk.expand.b);
    t = ad::leaky_relu(t, slope);
    t = ad::conv2d(t, blk.reduce.w, blk.reduce.b);
    t = ad::conv2d(t, blk.spatial.w, blk.spatial.b);
    if (blk.kind == BlockKind::wide) {
      t = ad::conv1d_axis(t, blk.oned_a.w, blk.oned_a.b, ad::Axis1d::width);
      t = ad::conv1d_axis(t, blk.oned_b.w, blk.oned_b.b, ad::Axis1d::height);
    }
    h = ad::add(h, t);
  }
  h = ad::conv2d(h, tail_.w, tail_.b);
  if (kind_ == NetKind::sr) {
    h = ad::pixel_shuffle(h, 2);
    if (cfg_.global_skip) h = ad::add(h, upsample_nearest2(x));
  } else if (cfg_.global_skip) {
    h = ad::add(h, x);
  }
  return h;
}

template <typename T>
std::vector<ad::Var<T>> Network<T>::params() const {
  std::vector<ad::Var<T>> out;
  auto push = [&out](const ConvParams<T>& c) {
    out.push_back(c.w);
    out.push_back(c.b);
  };
  push(head_);
  for (const ResBlock<T>& blk : body_) {
    push(blk.expand);
    push(blk.reduce);
    push(blk.spatial);
    if (blk.kind == BlockKind::wide) {
      push(blk.oned_a);
      push(blk.oned_b);
    }
  }
  push(tail_);
  return out;
}

template <typename T>
long Network<T>::param_count() const {
  long n = 0;
  for (const auto& p : params()) n += static_cast<long>(p->value.size());
  return n;
}

// ---- checkpoint container ----

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::FILE* f, std::uint32_t v) { std::fwrite(&v, sizeof(v), 1, f); }

std::uint32_t read_u32(std::FILE* f) {
  std::uint32_t v = 0;
  if (std::fread(&v, sizeof(v), 1, f) != 1) throw IoError(IoError::Code::truncated_payload, "checkpoint truncated");
  return v;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const Network<T>& net) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  std::fwrite("USRM", 1, 4, f);
  write_u32(f, kCheckpointVersion);
  write_u32(f, net.kind() == NetKind::sr ? 0u : 1u);
  write_u32(f, net.config().blocks == BlockKind::wide ? 0u : 1u);
  write_u32(f, static_cast<std::uint32_t>(net.config().channels));
  write_u32(f, static_cast<std::uint32_t>(net.config().num_blocks));
  write_u32(f, net.config().global_skip ? 1u : 0u);
  float slope = static_cast<float>(net.config().lrelu_slope);
  std::fwrite(&slope, sizeof(slope), 1, f);
  auto params = net.params();
  write_u32(f, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    write_u32(f, static_cast<std::uint32_t>(p->value.rank()));
    for (int d = 0; d < p->value.rank(); ++d) write_u32(f, static_cast<std::uint32_t>(p->value.dim(d)));
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      float v = static_cast<float>(p->value[i]);
      std::fwrite(&v, sizeof(v), 1, f);
    }
  }
  std::fclose(f);
}

template <typename T>
Network<T> load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open checkpoint: " + path);
  struct Closer {
    std::FILE* f;
    ~Closer() { std::fclose(f); }
  } closer{f};

  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "USRM", 4) != 0)
    throw IoError(IoError::Code::bad_magic, "not a checkpoint file: " + path);
  if (read_u32(f) != kCheckpointVersion) throw IoError(IoError::Code::unknown_version, "unknown checkpoint version");

  const std::uint32_t kind = read_u32(f);
  const std::uint32_t variant = read_u32(f);
  ModelConfig cfg;
  cfg.channels = static_cast<int>(read_u32(f));
  cfg.num_blocks = static_cast<int>(read_u32(f));
  cfg.blocks = variant == 0 ? BlockKind::wide : BlockKind::plain;
  cfg.global_skip = read_u32(f) != 0;
  float slope = 0.1f;
  if (std::fread(&slope, sizeof(slope), 1, f) != 1)
    throw IoError(IoError::Code::truncated_payload, "checkpoint truncated");
  cfg.lrelu_slope = slope;

  Network<T> net(kind == 0 ? NetKind::sr : NetKind::g, cfg, /*seed=*/0);
  auto params = net.params();
  const std::uint32_t count = read_u32(f);
  if (count != params.size()) throw IoError("checkpoint parameter count mismatch");
  for (auto& p : params) {
    const std::uint32_t rank = read_u32(f);
    if (rank != static_cast<std::uint32_t>(p->value.rank())) throw IoError("checkpoint tensor rank mismatch");
    for (int d = 0; d < p->value.rank(); ++d)
      if (read_u32(f) != static_cast<std::uint32_t>(p->value.dim(d)))
        throw IoError("checkpoint tensor shape mismatch");
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      float v;
      if (std::fread(&v, sizeof(v), 1, f) != 1)
        throw IoError(IoError::Code::truncated_payload, "checkpoint truncated");
      p->value[i] = static_cast<T>(v);
    }
  }
  return net;
}

#define USRGR_MODEL_INSTANTIATE(T)                                       \
  template class Network<T>;                                             \
  template void save_checkpoint<T>(const std::string&, const Network<T>&); \
  template Network<T> load_checkpoint<T>(const std::string&);

USRGR_MODEL_INSTANTIATE(float)
USRGR_MODEL_INSTANTIATE(double)

}  // namespace model
}  // namespace usrgr

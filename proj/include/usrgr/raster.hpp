#pragma once

#include <string>

#include "usrgr/tensor.hpp"

namespace usrgr {
namespace data {

/// Raster container: magic "USRT", u32 version, u32 rank, u32 extents[rank],
/// u32 dtype code (0 = float32), little-endian row-major float32 payload.
/// Bit-exact round trip. load_raster also accepts binary PGM (P5, maxval 255
/// or 65535), scaled to [0,1].
void save_raster(const std::string& path, const Tensor<float>& t);
Tensor<float> load_raster(const std::string& path);

}  // namespace data
}  // namespace usrgr

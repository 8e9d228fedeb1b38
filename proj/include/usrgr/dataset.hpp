#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "usrgr/tensor.hpp"

namespace usrgr {
namespace data {

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  double norm_stat = 1.0;
};

/// Line-oriented manifest:
///   usrgr-manifest v1
///   seed <u64>
///   split <name>
///   sample <id> <relative-path> <norm-stat>
struct DatasetManifest {
  std::string split;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
  std::string base_dir;  // set by load_manifest
};

void save_manifest(const std::string& path, const DatasetManifest& m);

/// Validates unique ids and that every referenced file exists.
DatasetManifest load_manifest(const std::string& path);

/// Divide by the per-image maximum; all-zero images pass through with
/// statistic 1.
std::pair<Tensor<float>, double> normalize(const Tensor<float>& img);
Tensor<float> denormalize(const Tensor<float>& img, double stat);

/// Uniform random top-left corners from a seeded generator. Patch extent
/// must divide by 4 (two f-crop levels during training).
std::vector<Tensor<float>> sample_patches(const Tensor<float>& img, int patch, int count, std::uint64_t seed);

enum class EvalMode { synthetic, real };

struct EvalPair {
  Tensor<float> input;
  std::optional<Tensor<float>> reference;
};

/// synthetic: input = f_crop(img), reference = img. real: input = img only.
EvalPair make_eval_pair(const Tensor<float>& img, EvalMode mode);

struct SplitCounts {
  int train = 200;
  int val = 20;
  int test = 20;
};

/// Writes normalized phantom rasters plus manifest_{train,val,test}.txt under
/// dir. Every phantom is regenerated (deterministic attempt chain) until its
/// largest intensity step is >= 0.2 after normalization.
void generate_phantom_dataset(const std::string& dir, const SplitCounts& counts, int size, std::uint64_t seed);

/// All images of a manifest, loaded in entry order.
std::vector<Tensor<float>> load_images(const DatasetManifest& m);

}  // namespace data
}  // namespace usrgr

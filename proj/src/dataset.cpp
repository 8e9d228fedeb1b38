#include "usrgr/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "usrgr/kspace.hpp"
#include "usrgr/phantom.hpp"
#include "usrgr/raster.hpp"
#include "usrgr/rng.hpp"

namespace fs = std::filesystem;

namespace usrgr {
namespace data {

void save_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << "usrgr-manifest v1\n";
  out << "seed " << m.seed << "\n";
  out << "split " << m.split << "\n";
  for (const auto& e : m.entries) {
    char stat[32];
    std::snprintf(stat, sizeof(stat), "%.17g", e.norm_stat);
    out << "sample " << e.id << " " << e.path << " " << stat << "\n";
  }
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  DatasetManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  std::string line;
  if (!std::getline(in, line) || line != "usrgr-manifest v1")
    throw IoError(IoError::Code::bad_magic, "not a manifest: " + path);
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "seed") {
      ss >> m.seed;
    } else if (kind == "split") {
      ss >> m.split;
    } else if (kind == "sample") {
      ManifestEntry e;
      ss >> e.id >> e.path >> e.norm_stat;
      if (!ss) throw IoError("malformed sample line in " + path + ": " + line);
      if (!ids.insert(e.id).second) throw IoError("duplicate sample id '" + e.id + "' in " + path);
      const fs::path full = fs::path(m.base_dir) / e.path;
      if (!fs::exists(full)) throw IoError("manifest references missing file: " + full.string());
      m.entries.push_back(std::move(e));
    } else {
      throw IoError("unknown manifest record '" + kind + "' in " + path);
    }
  }
  return m;
}

std::pair<Tensor<float>, double> normalize(const Tensor<float>& img) {
  if (img.empty()) throw ShapeError("normalize: empty image");
  const float peak = img.max();
  if (peak <= 0.0f) return {img, 1.0};
  Tensor<float> out(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = img[i] / peak;
  return {out, static_cast<double>(peak)};
}

Tensor<float> denormalize(const Tensor<float>& img, double stat) {
  Tensor<float> out(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = static_cast<float>(img[i] * stat);
  return out;
}

std::vector<Tensor<float>> sample_patches(const Tensor<float>& img, int patch, int count, std::uint64_t seed) {
  if (img.rank() != 2) throw ShapeError("sample_patches: image must be 2D");
  const int h = img.dim(0), w = img.dim(1);
  if (patch > h || patch > w) throw ShapeError("sample_patches: patch exceeds image extents");
  if (patch % 4 != 0) throw ShapeError("sample_patches: patch extent must divide by 4");
  Rng rng(seed);
  std::vector<Tensor<float>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - patch + 1)));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - patch + 1)));
    Tensor<float> p({patch, patch});
    for (int y = 0; y < patch; ++y)
      for (int x = 0; x < patch; ++x) p.at(y, x) = img.at(y0 + y, x0 + x);
    out.push_back(std::move(p));
  }
  return out;
}

EvalPair make_eval_pair(const Tensor<float>& img, EvalMode mode) {
  EvalPair pair;
  if (mode == EvalMode::synthetic) {
    pair.input = kspace::f_crop(img, 2);
    pair.reference = img;
  } else {
    pair.input = img;
  }
  return pair;
}

namespace {

void generate_split(const std::string& dir, const std::string& split, int count, int size, std::uint64_t seed,
                    std::uint64_t split_index) {
  DatasetManifest m;
  m.split = split;
  m.seed = seed;
  fs::create_directories(fs::path(dir) / split);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t sample_seed = derive_seed(seed, split_index * 1000003ULL + static_cast<std::uint64_t>(i));
    Tensor<float> img;
    double stat = 1.0;
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng(derive_seed(sample_seed, attempt));
      PhantomSpec spec = random_phantom_spec(size, rng);
      spec.seed = sample_seed;
      auto [norm, s] = normalize(gen_phantom(spec));
      if (max_discontinuity(norm) >= 0.2f) {
        img = std::move(norm);
        stat = s;
        break;
      }
      if (attempt > 64) throw NumericError("phantom generation failed to reach the contrast floor");
    }
    char id[16];
    std::snprintf(id, sizeof(id), "%03d", i);
    const std::string rel = split + "/phantom_" + id + ".usrt";
    save_raster((fs::path(dir) / rel).string(), img);
    m.entries.push_back({id, rel, stat});
  }
  save_manifest((fs::path(dir) / ("manifest_" + split + ".txt")).string(), m);
}

}  // namespace

void generate_phantom_dataset(const std::string& dir, const SplitCounts& counts, int size, std::uint64_t seed) {
  if (size % 4 != 0) throw ShapeError("generate_phantom_dataset: size must divide by 4");
  fs::create_directories(dir);
  generate_split(dir, "train", counts.train, size, seed, 0);
  generate_split(dir, "val", counts.val, size, seed, 1);
  generate_split(dir, "test", counts.test, size, seed, 2);
}

std::vector<Tensor<float>> load_images(const DatasetManifest& m) {
  std::vector<Tensor<float>> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back(load_raster((fs::path(m.base_dir) / e.path).string()));
  return out;
}

}  // namespace data
}  // namespace usrgr

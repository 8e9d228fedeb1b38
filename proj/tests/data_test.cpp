#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "usrgr/dataset.hpp"
#include "usrgr/kspace.hpp"
#include "usrgr/phantom.hpp"
#include "usrgr/raster.hpp"
#include "usrgr/rng.hpp"

using namespace usrgr;
namespace fs = std::filesystem;

namespace {

fs::path test_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("usrgr_data_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return !sa.empty() && sa == sb;
}

}  // namespace

TEST_CASE("gen_phantom: constant background for zero intensities, determinism") {
  data::PhantomSpec spec;
  spec.height = spec.width = 32;
  spec.background = 0.25;
  spec.ellipses.push_back({0.5, 0.5, 0.3, 0.2, 0.1, 0.0});
  Tensor<float> img = gen_phantom(spec);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(img[i] == 0.25f);

  data::PhantomSpec empty;
  empty.ellipses.clear();
  CHECK_THROWS_AS(gen_phantom(empty), ShapeError);

  Rng a(55), b(55);
  data::PhantomSpec sa = data::random_phantom_spec(64, a);
  data::PhantomSpec sb = data::random_phantom_spec(64, b);
  Tensor<float> ia = gen_phantom(sa), ib = gen_phantom(sb);
  for (std::size_t i = 0; i < ia.size(); ++i) CHECK(ia[i] == ib[i]);
}

TEST_CASE("gen_phantom: interior pixel count matches the analytic ellipse area within 2%") {
  data::PhantomSpec spec;
  spec.height = spec.width = 256;
  spec.background = 0.0;
  spec.ellipses.push_back({0.5, 0.5, 0.3, 0.2, 0.0, 1.0});
  Tensor<float> img = gen_phantom(spec);
  long count = 0;
  for (std::size_t i = 0; i < img.size(); ++i)
    if (img[i] > 0.5f) ++count;
  const double analytic = 3.14159265358979 * 0.3 * 0.2 * 256.0 * 256.0;
  CHECK(std::abs(count - analytic) / analytic < 0.02);
}

TEST_CASE("raster round trip is bitwise, error paths are typed") {
  const fs::path dir = test_dir("raster");
  Rng rng(7);
  Tensor<float> t({32, 32});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(-2, 2));
  const std::string path = (dir / "x.usrt").string();
  data::save_raster(path, t);
  Tensor<float> back = data::load_raster(path);
  CHECK(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

  // truncated payload
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(dir / "trunc.usrt", std::ios::binary);
    out.write(bytes.data(), static_cast<long>(bytes.size() - 64));
  }
  try {
    data::load_raster((dir / "trunc.usrt").string());
    CHECK(false);
  } catch (const IoError& e) {
    CHECK(e.code() == IoError::Code::truncated_payload);
  }

  // bad magic
  {
    std::ofstream out(dir / "junk.usrt", std::ios::binary);
    out << "JUNKJUNKJUNKJUNK";
  }
  try {
    data::load_raster((dir / "junk.usrt").string());
    CHECK(false);
  } catch (const IoError& e) {
    CHECK(e.code() == IoError::Code::bad_magic);
  }
}

TEST_CASE("PGM import: 8-bit and 16-bit scaling") {
  const fs::path dir = test_dir("pgm");
  {
    std::ofstream out(dir / "a.pgm", std::ios::binary);
    out << "P5\n# comment\n2 2\n255\n";
    const unsigned char px[4] = {0, 128, 200, 255};
    out.write(reinterpret_cast<const char*>(px), 4);
  }
  Tensor<float> a = data::load_raster((dir / "a.pgm").string());
  CHECK(a.shape() == std::vector<int>{2, 2});
  CHECK(a[0] == 0.0f);
  CHECK(a[3] == 1.0f);
  CHECK(a[1] == doctest::Approx(128.0 / 255.0));

  {
    std::ofstream out(dir / "b.pgm", std::ios::binary);
    out << "P5 2 1 65535\n";
    const unsigned char px[4] = {0xFF, 0xFF, 0x00, 0x01};  // big-endian 65535, 1
    out.write(reinterpret_cast<const char*>(px), 4);
  }
  Tensor<float> b = data::load_raster((dir / "b.pgm").string());
  CHECK(b[0] == 1.0f);
  CHECK(b[1] == doctest::Approx(1.0 / 65535.0));
}

TEST_CASE("normalize and its inverse") {
  Tensor<float> img({2, 2}, {1.0f, 2.0f, 4.0f, 0.5f});
  auto [norm, stat] = data::normalize(img);
  CHECK(stat == 4.0);
  CHECK(norm.max() == 1.0f);
  Tensor<float> back = data::denormalize(norm, stat);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back[i] - img[i]) < 1e-7f);

  Tensor<float> zeros({3, 3});
  auto [nz, sz] = data::normalize(zeros);
  CHECK(sz == 1.0);
  for (std::size_t i = 0; i < nz.size(); ++i) CHECK(nz[i] == 0.0f);
}

TEST_CASE("sample_patches: full-size, determinism, uniform corners") {
  Rng rng(9);
  Tensor<float> img({16, 16});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rng.uniform(0, 1));

  auto full = data::sample_patches(img, 16, 3, 1);
  CHECK(full.size() == 3);
  for (const auto& p : full)
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == img[i]);

  auto a = data::sample_patches(img, 8, 10, 42);
  auto b = data::sample_patches(img, 8, 10, 42);
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i) CHECK(a[k][i] == b[k][i]);

  CHECK_THROWS_AS(data::sample_patches(img, 32, 1, 1), ShapeError);
  CHECK_THROWS_AS(data::sample_patches(img, 10, 1, 1), ShapeError);  // not divisible by 4

  // chi-square uniformity of corners on a 12x12 image with 8x8 patches:
  // 25 equally likely corners, 1e5 draws, critical value for p=0.01 at df=24
  Tensor<float> wide({12, 12});
  long counts[5][5] = {};
  Rng corner_rng(123);
  const int draws = 100000;
  // one long stream through the library path
  auto patches = data::sample_patches(wide, 8, draws, 777);
  // recover corners by regenerating the stream the same way
  Rng replay(777);
  for (int i = 0; i < draws; ++i) {
    const int y0 = static_cast<int>(replay.below(5));
    const int x0 = static_cast<int>(replay.below(5));
    ++counts[y0][x0];
  }
  double chi2 = 0;
  const double expected = draws / 25.0;
  for (auto& row : counts)
    for (long c : row) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 42.98);  // chi-square 0.99 quantile, 24 degrees of freedom
}

TEST_CASE("make_eval_pair") {
  Rng rng(10);
  Tensor<float> img({64, 64});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rng.uniform(0, 1));

  data::EvalPair syn = data::make_eval_pair(img, data::EvalMode::synthetic);
  CHECK(syn.input.shape() == std::vector<int>{32, 32});
  REQUIRE(syn.reference.has_value());
  CHECK(syn.reference->shape() == std::vector<int>{64, 64});
  Tensor<float> direct = kspace::f_crop(img, 2);
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(syn.input[i] == direct[i]);

  data::EvalPair real = data::make_eval_pair(img, data::EvalMode::real);
  CHECK(!real.reference.has_value());
  CHECK(real.input.shape() == img.shape());
}

TEST_CASE("manifest round trip and validation") {
  const fs::path dir = test_dir("manifest");
  Tensor<float> img({8, 8});
  data::save_raster((dir / "s0.usrt").string(), img);
  data::save_raster((dir / "s1.usrt").string(), img);

  data::DatasetManifest m;
  m.split = "train";
  m.seed = 99;
  m.entries = {{"000", "s0.usrt", 1.5}, {"001", "s1.usrt", 2.0}};
  data::save_manifest((dir / "manifest_train.txt").string(), m);
  data::DatasetManifest back = data::load_manifest((dir / "manifest_train.txt").string());
  CHECK(back.split == "train");
  CHECK(back.seed == 99);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[1].norm_stat == 2.0);

  m.entries.push_back({"000", "s1.usrt", 1.0});
  data::save_manifest((dir / "dup.txt").string(), m);
  CHECK_THROWS_AS(data::load_manifest((dir / "dup.txt").string()), IoError);

  data::DatasetManifest missing;
  missing.split = "x";
  missing.entries = {{"000", "gone.usrt", 1.0}};
  data::save_manifest((dir / "missing.txt").string(), missing);
  CHECK_THROWS_AS(data::load_manifest((dir / "missing.txt").string()), IoError);
}

TEST_CASE("generate_phantom_dataset: bitwise reproducible, contrast floor holds") {
  const fs::path d1 = test_dir("gen1"), d2 = test_dir("gen2");
  data::SplitCounts counts{6, 2, 2};
  data::generate_phantom_dataset(d1.string(), counts, 64, 4242);
  data::generate_phantom_dataset(d2.string(), counts, 64, 4242);

  for (const std::string split : {"train", "val", "test"}) {
    data::DatasetManifest m = data::load_manifest((d1 / ("manifest_" + split + ".txt")).string());
    CHECK(!m.entries.empty());
    for (const auto& e : m.entries) {
      CHECK(same_bytes(d1 / e.path, d2 / e.path));
      Tensor<float> img = data::load_raster((d1 / e.path).string());
      CHECK(data::max_discontinuity(img) >= 0.2f);
      CHECK(img.max() <= 1.0f);
    }
  }
}

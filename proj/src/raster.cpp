#include "usrgr/raster.hpp"

#include <cctype>
#include <cstdio>
#include <cstring>
#include <vector>

namespace usrgr {
namespace data {

namespace {

constexpr std::uint32_t kRasterVersion = 1;

struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

Tensor<float> load_pgm(std::FILE* f, const std::string& path) {
  // header already positioned after "P5"
  auto next_int = [&]() {
    int c;
    do {
      c = std::fgetc(f);
      if (c == '#') {  // comment to end of line
        do {
          c = std::fgetc(f);
        } while (c != '\n' && c != EOF);
      }
    } while (std::isspace(c));
    long v = 0;
    bool any = false;
    while (std::isdigit(c)) {
      v = v * 10 + (c - '0');
      any = true;
      c = std::fgetc(f);
    }
    if (!any) throw IoError(IoError::Code::truncated_payload, "malformed PGM header: " + path);
    return v;
  };
  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  if (w <= 0 || h <= 0) throw IoError("PGM with non-positive extents: " + path);
  if (maxval != 255 && maxval != 65535)
    throw IoError(IoError::Code::unknown_dtype, "PGM maxval must be 255 or 65535: " + path);

  Tensor<float> out({static_cast<int>(h), static_cast<int>(w)});
  const std::size_t n = out.size();
  if (maxval == 255) {
    std::vector<unsigned char> buf(n);
    if (std::fread(buf.data(), 1, n, f) != n)
      throw IoError(IoError::Code::truncated_payload, "truncated PGM payload: " + path);
    for (std::size_t i = 0; i < n; ++i) out[i] = buf[i] / 255.0f;
  } else {
    std::vector<unsigned char> buf(2 * n);
    if (std::fread(buf.data(), 1, 2 * n, f) != 2 * n)
      throw IoError(IoError::Code::truncated_payload, "truncated PGM payload: " + path);
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1];  // PGM 16-bit is big-endian
      out[i] = v / 65535.0f;
    }
  }
  return out;
}

}  // namespace

void save_raster(const std::string& path, const Tensor<float>& t) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open raster for writing: " + path);
  FileCloser closer{f};
  std::fwrite("USRT", 1, 4, f);
  const std::uint32_t version = kRasterVersion;
  std::fwrite(&version, sizeof(version), 1, f);
  const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
  std::fwrite(&rank, sizeof(rank), 1, f);
  for (int d = 0; d < t.rank(); ++d) {
    const std::uint32_t e = static_cast<std::uint32_t>(t.dim(d));
    std::fwrite(&e, sizeof(e), 1, f);
  }
  const std::uint32_t dtype = 0;  // float32
  std::fwrite(&dtype, sizeof(dtype), 1, f);
  if (std::fwrite(t.data(), sizeof(float), t.size(), f) != t.size())
    throw IoError("short write on raster: " + path);
}

Tensor<float> load_raster(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open raster: " + path);
  FileCloser closer{f};

  char magic[4] = {0, 0, 0, 0};
  if (std::fread(magic, 1, 2, f) != 2) throw IoError(IoError::Code::truncated_payload, "empty file: " + path);
  if (magic[0] == 'P' && magic[1] == '5') return load_pgm(f, path);
  if (std::fread(magic + 2, 1, 2, f) != 2 || std::memcmp(magic, "USRT", 4) != 0)
    throw IoError(IoError::Code::bad_magic, "not a raster file (bad magic): " + path);

  auto read_u32 = [&](const char* what) {
    std::uint32_t v = 0;
    if (std::fread(&v, sizeof(v), 1, f) != 1)
      throw IoError(IoError::Code::truncated_payload, std::string("truncated raster (") + what + "): " + path);
    return v;
  };
  const std::uint32_t version = read_u32("version");
  if (version != kRasterVersion)
    throw IoError(IoError::Code::unknown_version, "unknown raster version " + std::to_string(version) + ": " + path);
  const std::uint32_t rank = read_u32("rank");
  if (rank == 0 || rank > 8) throw IoError("implausible raster rank: " + path);
  std::vector<int> shape;
  for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(read_u32("extent")));
  const std::uint32_t dtype = read_u32("dtype");
  if (dtype != 0) throw IoError(IoError::Code::unknown_dtype, "unknown raster dtype code: " + path);

  Tensor<float> out(shape);
  if (std::fread(out.data(), sizeof(float), out.size(), f) != out.size())
    throw IoError(IoError::Code::truncated_payload, "truncated payload: " + path);
  return out;
}

}  // namespace data
}  // namespace usrgr

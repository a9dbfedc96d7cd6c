#ifndef RRECON_IO_HPP
#define RRECON_IO_HPP

// RRC1 artifact files and the sha256 manifest that guards every read.
//
// Layout: "RRC1" | kind (u8) | ndims (u64) | dims (u64 each) | payload (f64 each).
// All integers and doubles little-endian; payload row-major over dims; kind 3
// (spectrum set) is complex and stores interleaved (re, im) pairs.

#include <openssl/evp.h>

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <unistd.h>

#include "rrecon/acquisition.hpp"
#include "rrecon/errors.hpp"
#include "rrecon/grid.hpp"
#include "rrecon/preprocess.hpp"

namespace rrecon {

enum class ArtifactKind : std::uint8_t { Matrix = 1, Vector = 2, SpectrumSet = 3, Image = 4 };

inline bool is_complex(ArtifactKind k) { return k == ArtifactKind::SpectrumSet; }

struct Artifact {
  ArtifactKind kind = ArtifactKind::Vector;
  std::vector<std::uint64_t> dims;
  std::vector<double> payload;

  std::uint64_t elements() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  std::uint64_t payload_length() const { return elements() * (is_complex(kind) ? 2u : 1u); }

  bool operator==(const Artifact&) const = default;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.append(reinterpret_cast<const char*>(bits.data()), bits.size());
}

template <typename T>
T get_le(std::string_view in, std::size_t& pos) {
  if (in.size() - pos < sizeof(T)) throw IoError("artifact: truncated file");
  std::array<unsigned char, sizeof(T)> bits;
  std::memcpy(bits.data(), in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  pos += sizeof(T);
  return std::bit_cast<T>(bits);
}

inline constexpr std::string_view kMagic = "RRC1";

}  // namespace detail

inline std::string encode_artifact(const Artifact& a) {
  if (a.payload.size() != a.payload_length()) throw ConfigError("artifact: payload length differs from dims");
  std::string out;
  out.reserve(13 + 8 * (a.dims.size() + a.payload.size()));
  out.append(detail::kMagic);
  out.push_back(static_cast<char>(a.kind));
  detail::put_le<std::uint64_t>(out, a.dims.size());
  for (auto d : a.dims) detail::put_le<std::uint64_t>(out, d);
  for (double v : a.payload) detail::put_le<double>(out, v);
  return out;
}

inline Artifact decode_artifact(std::string_view in) {
  if (in.size() < 5 || in.substr(0, 4) != detail::kMagic) throw IoError("artifact: bad magic");
  const auto kind = static_cast<std::uint8_t>(in[4]);
  if (kind < 1 || kind > 4) throw IoError("artifact: unknown kind " + std::to_string(kind));
  Artifact a;
  a.kind = static_cast<ArtifactKind>(kind);
  std::size_t pos = 5;
  const auto ndims = detail::get_le<std::uint64_t>(in, pos);
  if (ndims > (in.size() - pos) / 8) throw IoError("artifact: truncated file");
  for (std::uint64_t i = 0; i < ndims; ++i) a.dims.push_back(detail::get_le<std::uint64_t>(in, pos));
  const std::uint64_t len = a.payload_length();
  if ((in.size() - pos) % 8 != 0 || (in.size() - pos) / 8 != len) throw IoError("artifact: payload length differs from dims");
  a.payload.resize(len);
  for (auto& v : a.payload) v = detail::get_le<double>(in, pos);
  return a;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

/// Writes to a sibling temp file, then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed: " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

inline void write_artifact(const std::filesystem::path& path, const Artifact& a) {
  write_file_atomic(path, encode_artifact(a));
}

inline Artifact read_artifact(const std::filesystem::path& path) { return decode_artifact(read_file(path)); }

// ---------------------------------------------------------------------------
// Conversions

inline Artifact to_artifact(const RowMatrix& m) {
  Artifact a;
  a.kind = ArtifactKind::Matrix;
  a.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  a.payload.assign(m.data(), m.data() + m.size());
  return a;
}

inline Artifact to_artifact(const Eigen::VectorXd& v) {
  Artifact a;
  a.kind = ArtifactKind::Vector;
  a.dims = {static_cast<std::uint64_t>(v.size())};
  a.payload.assign(v.data(), v.data() + v.size());
  return a;
}

/// dims (coils, freq_count, count); element (l, j, k) is scan k at component l * freq_count + j.
inline Artifact to_artifact(const SpectrumSet& s) {
  Artifact a;
  a.kind = ArtifactKind::SpectrumSet;
  a.dims = {static_cast<std::uint64_t>(s.coils), s.freq_count, s.count()};
  a.payload.reserve(2 * s.components() * s.count());
  for (Eigen::Index c = 0; c < s.data.rows(); ++c)
    for (Eigen::Index k = 0; k < s.data.cols(); ++k) {
      a.payload.push_back(s.data(c, k).real());
      a.payload.push_back(s.data(c, k).imag());
    }
  return a;
}

/// Voxel images are stored with dims (nz, ny, nx) so that row-major order is x fastest.
inline Artifact image_artifact(const std::vector<double>& values, const VoxelGrid& grid) {
  if (values.size() != grid.size()) throw ConfigError("image artifact: value count differs from grid");
  Artifact a;
  a.kind = ArtifactKind::Image;
  a.dims = {grid.dims[2], grid.dims[1], grid.dims[0]};
  a.payload = values;
  return a;
}

namespace detail {
inline void expect(const Artifact& a, ArtifactKind kind, std::size_t ndims, const char* what) {
  if (a.kind != kind || a.dims.size() != ndims) throw IoError(std::string("artifact: expected ") + what);
}
}  // namespace detail

inline RowMatrix matrix_from(const Artifact& a) {
  detail::expect(a, ArtifactKind::Matrix, 2, "a matrix");
  RowMatrix m(static_cast<Eigen::Index>(a.dims[0]), static_cast<Eigen::Index>(a.dims[1]));
  std::copy(a.payload.begin(), a.payload.end(), m.data());
  return m;
}

inline Eigen::VectorXd vector_from(const Artifact& a) {
  detail::expect(a, ArtifactKind::Vector, 1, "a vector");
  return Eigen::Map<const Eigen::VectorXd>(a.payload.data(), static_cast<Eigen::Index>(a.payload.size()));
}

inline SpectrumSet spectrum_set_from(const Artifact& a) {
  detail::expect(a, ArtifactKind::SpectrumSet, 3, "a spectrum set");
  SpectrumSet s;
  s.coils = static_cast<int>(a.dims[0]);
  s.freq_count = a.dims[1];
  s.data.resize(static_cast<Eigen::Index>(a.dims[0] * a.dims[1]), static_cast<Eigen::Index>(a.dims[2]));
  std::size_t p = 0;
  for (Eigen::Index c = 0; c < s.data.rows(); ++c)
    for (Eigen::Index k = 0; k < s.data.cols(); ++k, p += 2) s.data(c, k) = {a.payload[p], a.payload[p + 1]};
  return s;
}

inline std::vector<double> image_from(const Artifact& a, const VoxelGrid& grid) {
  detail::expect(a, ArtifactKind::Image, 3, "an image");
  if (a.dims[0] != grid.dims[2] || a.dims[1] != grid.dims[1] || a.dims[2] != grid.dims[0])
    throw ConfigError("image artifact: dims differ from the configured grid");
  return a.payload;
}

// ---------------------------------------------------------------------------
// Manifest: `sha256sum`-compatible lines "<hex>  <file name>", sorted by name.

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 digest failed");
  std::ostringstream ss;
  ss << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) ss << std::setw(2) << static_cast<int>(digest[i]);
  return ss.str();
}

inline constexpr const char* kManifestName = "manifest.sha256";

using Manifest = std::map<std::string, std::string>;  // file name -> hex digest

inline Manifest read_manifest(const std::filesystem::path& dir) {
  Manifest m;
  const auto path = dir / kManifestName;
  if (!std::filesystem::exists(path)) return m;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sep = line.find("  ");
    if (sep != 64) throw IoError("manifest: malformed line '" + line + "'");
    m[line.substr(sep + 2)] = line.substr(0, sep);
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  std::string out;
  for (const auto& [name, hex] : m) out += hex + "  " + name + "\n";
  write_file_atomic(dir / kManifestName, out);
}

/// Writes a batch of files atomically and records their digests in the directory manifest.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) throw IoError("cannot create output directory " + dir_.string());
  }

  const std::filesystem::path& path() const { return dir_; }

  void put(const std::string& name, std::string_view bytes) {
    write_file_atomic(dir_ / name, bytes);
    digests_[name] = sha256_hex(bytes);
  }
  void put(const std::string& name, const Artifact& a) { put(name, encode_artifact(a)); }

  /// Unhashed side file (timings).
  void put_sidecar(const std::string& name, std::string_view bytes) { write_file_atomic(dir_ / name, bytes); }

  void commit() {
    Manifest m = read_manifest(dir_);
    for (const auto& [k, v] : digests_) m[k] = v;
    write_manifest(dir_, m);
  }

 private:
  std::filesystem::path dir_;
  Manifest digests_;
};

/// Reads a file listed in the directory manifest and checks its digest.
inline std::string read_verified(const std::filesystem::path& dir, const std::string& name) {
  const Manifest m = read_manifest(dir);
  const auto it = m.find(name);
  if (it == m.end()) throw IoError("integrity: " + name + " is not listed in " + (dir / kManifestName).string());
  const std::string bytes = read_file(dir / name);
  if (sha256_hex(bytes) != it->second) throw IoError("integrity: digest mismatch for " + (dir / name).string());
  return bytes;
}

inline Artifact read_verified_artifact(const std::filesystem::path& dir, const std::string& name) {
  return decode_artifact(read_verified(dir, name));
}

}  // namespace rrecon

#endif  // RRECON_IO_HPP

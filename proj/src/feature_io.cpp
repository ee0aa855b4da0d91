#include <array>
#include <fstream>

#include "dysfluency/binary_io.hpp"
#include "dysfluency/data.hpp"

namespace dysfluency {

namespace {
constexpr std::array<char, 4> kMagic{'D', 'Y', 'S', 'F'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

void write_feature_file(const std::filesystem::path& path, const FloatFeatures& features) {
  if (features.rows() < 1 || features.cols() < 1) throw InvalidArgument("write_feature_file: t and d must be >= 1");
  require_finite(features, "write_feature_file");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open feature file for writing: " + path.string());
  out.write(kMagic.data(), kMagic.size());
  binary::write_le<std::uint16_t>(out, kVersion);
  binary::write_le<std::uint16_t>(out, 0);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.rows()));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.cols()));
  for (Eigen::Index i = 0; i < features.size(); ++i) binary::write_le<float>(out, features.data()[i]);
  if (!out) throw IoError("failed writing feature file: " + path.string());
}

void write_feature_file(const std::filesystem::path& path, const Matrix& features) {
  write_feature_file(path, FloatFeatures(features.cast<float>()));
}

FloatFeatures read_feature_file_f32(const std::filesystem::path& path, std::optional<int> expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path.string());
  const std::string what = "feature file " + path.string();
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw FormatError(what + ": truncated header");
  if (magic != kMagic) throw FormatError(what + ": bad magic");
  if (binary::read_le<std::uint16_t>(in, what) != kVersion) throw FormatError(what + ": unsupported version");
  binary::read_le<std::uint16_t>(in, what);
  const auto t = binary::read_le<std::uint32_t>(in, what);
  const auto d = binary::read_le<std::uint32_t>(in, what);
  if (t < 1 || d < 1) throw FormatError(what + ": empty feature sequence");
  if (expected_dim && static_cast<int>(d) != *expected_dim) {
    throw FormatError(what + ": feature dim " + std::to_string(d) + " does not match configured " +
                      std::to_string(*expected_dim));
  }
  const std::size_t count = static_cast<std::size_t>(t) * d;
  std::vector<unsigned char> raw(count * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError(what + ": truncated payload");
  }
  FloatFeatures out(t, d);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) | (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                               (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                               (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    out.data()[i] = v;
  }
  require_finite(out, what);
  return out;
}

Matrix read_feature_file(const std::filesystem::path& path, std::optional<int> expected_dim) {
  return read_feature_file_f32(path, expected_dim).cast<double>();
}

}  // namespace dysfluency

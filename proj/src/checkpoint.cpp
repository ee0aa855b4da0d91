#include <array>
#include <fstream>

#include "dysfluency/binary_io.hpp"
#include "dysfluency/model.hpp"

namespace dysfluency {

namespace {
constexpr std::array<char, 4> kMagic{'D', 'Y', 'S', 'H'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

// Layout: magic, u16 version, HeadConfig (u32 feature_dim, u32 projector_dim,
// u32 num_classes, u32 aux_outputs, f64 dropout_rate, u64 seed, u8 pooling,
// u8 query_projection), then each tensor as u32 rows, u32 cols, row-major f64.
void save_checkpoint(const HeadParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  const HeadConfig& c = params.config;
  out.write(kMagic.data(), kMagic.size());
  binary::write_le<std::uint16_t>(out, kVersion);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.feature_dim));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.projector_dim));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.num_classes));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.aux_outputs));
  binary::write_le<double>(out, c.dropout_rate);
  binary::write_le<std::uint64_t>(out, c.seed);
  binary::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(c.pooling));
  binary::write_le<std::uint8_t>(out, c.query_projection ? 1 : 0);
  for (const Matrix* m : params.tensors()) {
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m->rows()));
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m->cols()));
    for (Eigen::Index i = 0; i < m->size(); ++i) binary::write_le<double>(out, m->data()[i]);
  }
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

HeadParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  const std::string what = "checkpoint " + path.string();
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError(what + ": bad magic");
  if (binary::read_le<std::uint16_t>(in, what) != kVersion) throw FormatError(what + ": unsupported version");
  HeadParams params;
  HeadConfig& c = params.config;
  c.feature_dim = static_cast<int>(binary::read_le<std::uint32_t>(in, what));
  c.projector_dim = static_cast<int>(binary::read_le<std::uint32_t>(in, what));
  c.num_classes = static_cast<int>(binary::read_le<std::uint32_t>(in, what));
  c.aux_outputs = static_cast<int>(binary::read_le<std::uint32_t>(in, what));
  c.dropout_rate = binary::read_le<double>(in, what);
  c.seed = binary::read_le<std::uint64_t>(in, what);
  const auto pooling = binary::read_le<std::uint8_t>(in, what);
  if (pooling > static_cast<std::uint8_t>(PoolingMode::kMeanKeyValue)) throw FormatError(what + ": bad pooling mode");
  c.pooling = static_cast<PoolingMode>(pooling);
  c.query_projection = binary::read_le<std::uint8_t>(in, what) != 0;
  c.validate();

  const Eigen::Index d = c.feature_dim, p = c.projector_dim, k = c.num_classes;
  const std::array<std::pair<Eigen::Index, Eigen::Index>, HeadParams::kTensorCount> shapes{
      {{d, d}, {d, d}, {d, d}, {d, p}, {1, p}, {p, k}, {1, k}, {p, 2}, {1, 2}}};
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto rows = binary::read_le<std::uint32_t>(in, what);
    const auto cols = binary::read_le<std::uint32_t>(in, what);
    if (rows != shapes[i].first || cols != shapes[i].second) {
      throw FormatError(what + ": tensor " + std::string(HeadParams::tensor_names()[i]) + " has shape " +
                        std::to_string(rows) + "x" + std::to_string(cols) + ", config implies " +
                        std::to_string(shapes[i].first) + "x" + std::to_string(shapes[i].second));
    }
    Matrix& m = *tensors[i];
    m.resize(rows, cols);
    for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = binary::read_le<double>(in, what);
    require_finite(m, what);
  }
  return params;
}

}  // namespace dysfluency

#include "dkph/checkpoint.hpp"

#include <fstream>

#include "dkph/binary_io.hpp"

namespace dkph {

void write_checkpoint(std::ostream& os, const NamedMatrices& entries) {
  binary::write_magic(os, kCheckpointMagic);
  binary::write_u32(os, kCheckpointVersion);
  binary::write_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, value] : entries) {
    binary::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binary::write_u32(os, static_cast<std::uint32_t>(value.rows()));
    binary::write_u32(os, static_cast<std::uint32_t>(value.cols()));
    for (double v : value.values()) binary::write_f64(os, v);
  }
  if (!os) throw IoError("checkpoint write failed");
}

NamedMatrices read_checkpoint(std::istream& is) {
  binary::expect_magic(is, kCheckpointMagic);
  binary::expect_version(is, kCheckpointVersion);
  const std::uint32_t count = binary::read_u32(is);
  NamedMatrices out;
  out.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t len = binary::read_u32(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("truncated checkpoint name");
    const std::uint32_t rows = binary::read_u32(is);
    const std::uint32_t cols = binary::read_u32(is);
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (double& v : data) v = binary::read_f64(is);
    out.push_back({std::move(name), Matrix(rows, cols, std::move(data))});
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedMatrices& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, entries);
}

NamedMatrices load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_checkpoint(is);
}

const Matrix& find_matrix(const NamedMatrices& entries, std::string_view name) {
  for (const auto& e : entries) {
    if (e.name == name) return e.value;
  }
  throw IoError("checkpoint has no matrix named '" + std::string(name) + "'");
}

}  // namespace dkph

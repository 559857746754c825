#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "dkph/errors.hpp"
#include "dkph/numerics.hpp"

namespace dkph {

struct NamedMatrix {
  std::string name;
  Matrix value;
};

using NamedMatrices = std::vector<NamedMatrix>;

// Layout: "DKPM", u32 version, u32 count, then per entry u32 name length,
// name bytes, u32 rows, u32 cols, rows·cols little-endian f64.
inline constexpr std::string_view kCheckpointMagic = "DKPM";
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const NamedMatrices& entries);
NamedMatrices read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const NamedMatrices& entries);
NamedMatrices load_checkpoint(const std::filesystem::path& path);

const Matrix& find_matrix(const NamedMatrices& entries, std::string_view name);

template <class Params>
NamedMatrices export_params(const Params& p, std::string_view prefix = {}) {
  NamedMatrices out;
  p.for_each([&](std::string_view name, const Matrix& m) {
    out.push_back({std::string(prefix) + std::string(name), m});
  });
  return out;
}

/// Fills every parameter from `entries` by name; missing names or shape
/// mismatches are IoErrors.
template <class Params>
void import_params(Params& p, const NamedMatrices& entries, std::string_view prefix = {}) {
  p.for_each([&](std::string_view name, Matrix& m) {
    const std::string full = std::string(prefix) + std::string(name);
    const Matrix& src = find_matrix(entries, full);
    if (!src.same_shape(m)) throw IoError("checkpoint shape mismatch for '" + full + "'");
    m = src;
  });
}

}  // namespace dkph

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "dkph/errors.hpp"

// Little-endian primitives shared by every on-disk format.
namespace dkph::binary {

template <class UInt>
void write_le(std::ostream& os, UInt value) {
  std::array<char, sizeof(UInt)> bytes{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  os.write(bytes.data(), bytes.size());
}

template <class UInt>
UInt read_le(std::istream& is) {
  std::array<unsigned char, sizeof(UInt)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw IoError("unexpected end of stream");
  }
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    value |= static_cast<UInt>(bytes[i]) << (8 * i);
  }
  return value;
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
inline std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
inline std::uint64_t read_u64(std::istream& is) { return read_le<std::uint64_t>(is); }

inline void write_f64(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }
inline void write_f32(std::ostream& os, float v) { write_le(os, std::bit_cast<std::uint32_t>(v)); }
inline float read_f32(std::istream& is) { return std::bit_cast<float>(read_u32(is)); }

inline void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw IoError("bad magic, expected '" + std::string(magic) + "'");
  }
}

inline void expect_version(std::istream& is, std::uint32_t supported) {
  const std::uint32_t version = read_u32(is);
  if (version != supported) {
    throw IoError("unsupported format version " + std::to_string(version));
  }
}

}  // namespace dkph::binary

#include "dkph/binary_code.hpp"

#include "dkph/errors.hpp"

namespace dkph {

BinaryCode::BinaryCode(std::vector<std::int8_t> bits) : bits_(std::move(bits)) {
  for (std::int8_t b : bits_) {
    if (b != 1 && b != -1) throw DomainError("BinaryCode bits must be -1 or +1");
  }
}

BinaryCode BinaryCode::from_signs(std::span<const double> values) {
  std::vector<std::int8_t> bits(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) bits[k] = values[k] >= 0.0 ? 1 : -1;
  return BinaryCode(std::move(bits));
}

BinaryCode BinaryCode::unpack(std::span<const std::uint8_t> packed, std::size_t bits) {
  if (packed.size() != packed_bytes(bits)) throw ShapeError("BinaryCode::unpack: byte count");
  std::vector<std::int8_t> out(bits);
  for (std::size_t k = 0; k < bits; ++k) out[k] = ((packed[k / 8] >> (k % 8)) & 1U) != 0 ? 1 : -1;
  return BinaryCode(std::move(out));
}

std::vector<std::uint8_t> BinaryCode::pack() const {
  std::vector<std::uint8_t> out(packed_bytes(bits_.size()), 0);
  for (std::size_t k = 0; k < bits_.size(); ++k) {
    if (bits_[k] > 0) out[k / 8] |= static_cast<std::uint8_t>(1U << (k % 8));
  }
  return out;
}

Matrix BinaryCode::as_row() const {
  Matrix m(1, bits_.size());
  for (std::size_t k = 0; k < bits_.size(); ++k) m(0, k) = bits_[k];
  return m;
}

BinaryCode BinaryCode::negated() const {
  std::vector<std::int8_t> out(bits_.size());
  for (std::size_t k = 0; k < bits_.size(); ++k) out[k] = static_cast<std::int8_t>(-bits_[k]);
  return BinaryCode(std::move(out));
}

}  // namespace dkph

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dkph/numerics.hpp"

namespace dkph {

/// How backward passes treat the sign nonlinearity. kStraightThrough passes
/// the incoming gradient unchanged (training); kZero uses the true
/// derivative almost everywhere, which finite differences can verify.
enum class SignGradient { kStraightThrough, kZero };

/// sign with sign(0) = +1, so codes never contain 0.
inline double hard_sign(double v) noexcept { return v >= 0.0 ? 1.0 : -1.0; }

/// K bits over {−1,+1}. Packed form: ⌈K/8⌉ bytes, bit k stored at byte k/8,
/// position k mod 8, with +1 ↦ 1.
class BinaryCode {
 public:
  BinaryCode() = default;
  explicit BinaryCode(std::vector<std::int8_t> bits);

  /// Binarizes a 1×K (or K×1) real matrix with hard_sign.
  static BinaryCode from_signs(std::span<const double> values);
  static BinaryCode unpack(std::span<const std::uint8_t> packed, std::size_t bits);

  std::size_t size() const noexcept { return bits_.size(); }
  std::int8_t operator[](std::size_t k) const { return bits_[k]; }
  const std::vector<std::int8_t>& bits() const noexcept { return bits_; }

  std::vector<std::uint8_t> pack() const;
  Matrix as_row() const;
  BinaryCode negated() const;

  bool operator==(const BinaryCode&) const = default;

 private:
  std::vector<std::int8_t> bits_;
};

inline std::size_t packed_bytes(std::size_t bits) { return (bits + 7) / 8; }

}  // namespace dkph

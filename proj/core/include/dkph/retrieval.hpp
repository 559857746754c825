#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dkph/binary_code.hpp"

namespace dkph {

/// Number of differing bits; throws ShapeError on a length mismatch.
std::size_t hamming(const BinaryCode& a, const BinaryCode& b);
std::size_t hamming_packed(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// Packed database codes with unique ids and optional class labels.
class CodeIndex {
 public:
  CodeIndex(std::span<const BinaryCode> codes, std::vector<std::int64_t> ids,
            std::vector<int> labels = {});
  /// Ids default to 0..n-1.
  explicit CodeIndex(std::span<const BinaryCode> codes, std::vector<int> labels = {});

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t bits() const noexcept { return bits_; }
  std::size_t stride() const noexcept { return stride_; }
  std::span<const std::uint8_t> packed(std::size_t row) const {
    return {packed_.data() + row * stride_, stride_};
  }
  std::int64_t id(std::size_t row) const { return ids_[row]; }
  bool has_labels() const noexcept { return !labels_.empty(); }
  int label(std::size_t row) const { return labels_.at(row); }

 private:
  std::size_t bits_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::uint8_t> packed_;
  std::vector<std::int64_t> ids_;
  std::vector<int> labels_;
};

struct RankedHit {
  std::int64_t id;
  std::size_t distance;
  std::size_t row;
};

/// Ordered by (distance, id) ascending.
using RankedList = std::vector<RankedHit>;

/// The k nearest database items. `exclude_id` drops a self-match. Throws
/// DomainError when k exceeds the index size.
RankedList query_topk(const CodeIndex& index, const BinaryCode& query, std::size_t k,
                      std::optional<std::int64_t> exclude_id = std::nullopt);

struct QuerySet {
  std::vector<BinaryCode> codes;
  std::vector<std::int64_t> ids;  // used to exclude self-matches
  std::vector<int> labels;
};

struct MapResult {
  double map = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // queries with no relevant database item
};

/// AP@k = Σ_{j≤k} P(j)·rel(j) / min(R, k), R the relevant count in the
/// database; relevance means equal labels.
double average_precision_at_k(const std::vector<bool>& relevance_in_rank_order,
                              std::size_t relevant_total, std::size_t k);

MapResult map_at_k(const QuerySet& queries, const CodeIndex& index, std::size_t k);

struct PrPoint {
  std::size_t radius = 0;
  double recall = 0.0;
  /// Mean over queries with a non-empty retrieved set; absent if none.
  std::optional<double> precision;
};

/// Hamming-radius sweep r = 0..K averaged over queries with R ≥ 1.
std::vector<PrPoint> pr_curve(const QuerySet& queries, const CodeIndex& index);

// Codes file: "DKPB", u32 version, u32 n, u32 K, then n packed rows.
void save_codes(const std::filesystem::path& path, std::span<const BinaryCode> codes);
std::vector<BinaryCode> load_codes(const std::filesystem::path& path);

// Labels file: one integer per line.
void save_labels(const std::filesystem::path& path, std::span<const int> labels);
std::vector<int> load_labels(const std::filesystem::path& path);

}  // namespace dkph

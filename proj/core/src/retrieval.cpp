#include "dkph/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <string>

#include "dkph/binary_io.hpp"
#include "dkph/errors.hpp"

namespace dkph {

namespace {

constexpr std::string_view kCodesMagic = "DKPB";
constexpr std::uint32_t kCodesVersion = 1;

bool ranks_before(const RankedHit& a, const RankedHit& b) {
  return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
}

RankedList rank_all(const CodeIndex& index, const BinaryCode& query,
                    std::optional<std::int64_t> exclude_id) {
  if (query.size() != index.bits()) throw ShapeError("query code length differs from the index");
  const std::vector<std::uint8_t> q = query.pack();
  RankedList hits;
  hits.reserve(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (exclude_id && index.id(r) == *exclude_id) continue;
    hits.push_back({index.id(r), hamming_packed(q, index.packed(r)), r});
  }
  return hits;
}

}  // namespace

std::size_t hamming_packed(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw ShapeError("hamming: packed length mismatch");
  std::size_t d = 0;
  std::size_t i = 0;
  for (; i + 8 <= a.size(); i += 8) {
    std::uint64_t x = 0;
    std::uint64_t y = 0;
    std::memcpy(&x, a.data() + i, 8);
    std::memcpy(&y, b.data() + i, 8);
    d += static_cast<std::size_t>(std::popcount(x ^ y));
  }
  for (; i < a.size(); ++i) {
    d += static_cast<std::size_t>(std::popcount(static_cast<unsigned>(a[i] ^ b[i])));
  }
  return d;
}

std::size_t hamming(const BinaryCode& a, const BinaryCode& b) {
  if (a.size() != b.size()) {
    throw ShapeError("hamming: code lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  return hamming_packed(a.pack(), b.pack());
}

CodeIndex::CodeIndex(std::span<const BinaryCode> codes, std::vector<std::int64_t> ids,
                     std::vector<int> labels)
    : ids_(std::move(ids)), labels_(std::move(labels)) {
  if (ids_.size() != codes.size()) throw ShapeError("CodeIndex: one id per code");
  if (!labels_.empty() && labels_.size() != codes.size()) {
    throw ShapeError("CodeIndex: one label per code");
  }
  if (std::set<std::int64_t>(ids_.begin(), ids_.end()).size() != ids_.size()) {
    throw DomainError("CodeIndex: ids must be unique");
  }
  bits_ = codes.empty() ? 0 : codes.front().size();
  stride_ = packed_bytes(bits_);
  packed_.reserve(codes.size() * stride_);
  for (const BinaryCode& c : codes) {
    if (c.size() != bits_) throw ShapeError("CodeIndex: codes differ in length");
    const auto bytes = c.pack();
    packed_.insert(packed_.end(), bytes.begin(), bytes.end());
  }
}

namespace {
std::vector<std::int64_t> sequential_ids(std::size_t n) {
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(i);
  return ids;
}
}  // namespace

CodeIndex::CodeIndex(std::span<const BinaryCode> codes, std::vector<int> labels)
    : CodeIndex(codes, sequential_ids(codes.size()), std::move(labels)) {}

RankedList query_topk(const CodeIndex& index, const BinaryCode& query, std::size_t k,
                      std::optional<std::int64_t> exclude_id) {
  if (k > index.size()) {
    throw DomainError("query_topk: k=" + std::to_string(k) + " exceeds index size " +
                      std::to_string(index.size()));
  }
  RankedList hits = rank_all(index, query, exclude_id);
  const std::size_t keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                    ranks_before);
  hits.resize(keep);
  return hits;
}

double average_precision_at_k(const std::vector<bool>& relevance, std::size_t relevant_total,
                              std::size_t k) {
  if (relevant_total == 0 || k == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t depth = std::min(k, relevance.size());
  for (std::size_t j = 0; j < depth; ++j) {
    if (!relevance[j]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(j + 1);
  }
  return sum / static_cast<double>(std::min(relevant_total, k));
}

MapResult map_at_k(const QuerySet& queries, const CodeIndex& index, std::size_t k) {
  if (queries.codes.empty()) throw DomainError("map_at_k: empty query set");
  if (queries.labels.size() != queries.codes.size()) throw ShapeError("map_at_k: query labels");
  if (!queries.ids.empty() && queries.ids.size() != queries.codes.size()) {
    throw ShapeError("map_at_k: query ids");
  }
  if (!index.has_labels()) throw DomainError("map_at_k: index has no labels");

  MapResult out;
  double total = 0.0;
  for (std::size_t q = 0; q < queries.codes.size(); ++q) {
    const auto self = queries.ids.empty() ? std::nullopt
                                          : std::optional<std::int64_t>(queries.ids[q]);
    std::size_t relevant = 0;
    for (std::size_t r = 0; r < index.size(); ++r) {
      if (self && index.id(r) == *self) continue;
      if (index.label(r) == queries.labels[q]) ++relevant;
    }
    if (relevant == 0) {
      ++out.skipped;
      continue;
    }
    const RankedList top = query_topk(index, queries.codes[q], k, self);
    std::vector<bool> rel(top.size());
    for (std::size_t j = 0; j < top.size(); ++j) rel[j] = index.label(top[j].row) == queries.labels[q];
    total += average_precision_at_k(rel, relevant, k);
    ++out.evaluated;
  }
  out.map = out.evaluated == 0 ? 0.0 : total / static_cast<double>(out.evaluated);
  return out;
}

std::vector<PrPoint> pr_curve(const QuerySet& queries, const CodeIndex& index) {
  if (queries.labels.size() != queries.codes.size()) throw ShapeError("pr_curve: query labels");
  if (!index.has_labels()) throw DomainError("pr_curve: index has no labels");
  const std::size_t bits = index.bits();
  std::vector<double> recall_sum(bits + 1, 0.0);
  std::vector<double> precision_sum(bits + 1, 0.0);
  std::vector<std::size_t> precision_n(bits + 1, 0);
  std::size_t evaluated = 0;

  for (std::size_t q = 0; q < queries.codes.size(); ++q) {
    const RankedList hits =
        queries.ids.empty() ? rank_all(index, queries.codes[q], std::nullopt)
                            : rank_all(index, queries.codes[q], queries.ids[q]);
    std::vector<std::size_t> total_at(bits + 1, 0);
    std::vector<std::size_t> relevant_at(bits + 1, 0);
    std::size_t relevant = 0;
    for (const RankedHit& h : hits) {
      ++total_at[h.distance];
      if (index.label(h.row) == queries.labels[q]) {
        ++relevant_at[h.distance];
        ++relevant;
      }
    }
    if (relevant == 0) continue;
    ++evaluated;
    std::size_t retrieved = 0;
    std::size_t retrieved_relevant = 0;
    for (std::size_t r = 0; r <= bits; ++r) {
      retrieved += total_at[r];
      retrieved_relevant += relevant_at[r];
      recall_sum[r] += static_cast<double>(retrieved_relevant) / static_cast<double>(relevant);
      if (retrieved > 0) {
        precision_sum[r] += static_cast<double>(retrieved_relevant) / static_cast<double>(retrieved);
        ++precision_n[r];
      }
    }
  }

  std::vector<PrPoint> curve;
  for (std::size_t r = 0; r <= bits; ++r) {
    PrPoint p;
    p.radius = r;
    p.recall = evaluated == 0 ? 0.0 : recall_sum[r] / static_cast<double>(evaluated);
    if (precision_n[r] > 0) p.precision = precision_sum[r] / static_cast<double>(precision_n[r]);
    curve.push_back(p);
  }
  return curve;
}

void save_codes(const std::filesystem::path& path, std::span<const BinaryCode> codes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const std::size_t bits = codes.empty() ? 0 : codes.front().size();
  binary::write_magic(os, kCodesMagic);
  binary::write_u32(os, kCodesVersion);
  binary::write_u32(os, static_cast<std::uint32_t>(codes.size()));
  binary::write_u32(os, static_cast<std::uint32_t>(bits));
  for (const BinaryCode& c : codes) {
    if (c.size() != bits) throw ShapeError("save_codes: codes differ in length");
    const auto bytes = c.pack();
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  if (!os) throw IoError("codes write failed: " + path.string());
}

std::vector<BinaryCode> load_codes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  binary::expect_magic(is, kCodesMagic);
  binary::expect_version(is, kCodesVersion);
  const std::uint32_t n = binary::read_u32(is);
  const std::uint32_t bits = binary::read_u32(is);
  std::vector<BinaryCode> out;
  out.reserve(n);
  std::vector<std::uint8_t> bytes(packed_bytes(bits));
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
      throw IoError("truncated codes file: " + path.string());
    }
    out.push_back(BinaryCode::unpack(bytes, bits));
  }
  return out;
}

void save_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  for (int l : labels) os << l << '\n';
  if (!os) throw IoError("labels write failed: " + path.string());
}

std::vector<int> load_labels(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<int> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(line, &used));
      if (used != line.size()) throw IoError("bad label line: " + line);
    } catch (const std::logic_error&) {
      throw IoError("bad label line: " + line);
    }
  }
  return out;
}

}  // namespace dkph

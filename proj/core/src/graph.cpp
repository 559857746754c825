#include "dkph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "dkph/binary_io.hpp"
#include "dkph/errors.hpp"
#include "dkph/log.hpp"

namespace dkph {

namespace {

constexpr std::string_view kGraphMagic = "DKPG";
constexpr std::uint32_t kGraphVersion = 1;

struct Nearest {
  std::uint32_t center;
  double sq_dist;
};

Nearest nearest_center(std::span<const double> point, const Matrix& centers) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = squared_distance(point, centers.row(c));
    if (d < best.sq_dist) best = {static_cast<std::uint32_t>(c), d};
  }
  return best;
}

// Returns the inertia of the new assignment; `changed` reports whether any
// point moved.
double assign(const Matrix& points, const Matrix& centers, std::vector<std::uint32_t>& labels,
              bool& changed) {
  double inertia = 0.0;
  changed = false;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const Nearest n = nearest_center(points.row(i), centers);
    if (labels[i] != n.center) changed = true;
    labels[i] = n.center;
    inertia += n.sq_dist;
  }
  return inertia;
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centers(k, points.cols());
  auto copy_row = [&](std::size_t from, std::size_t to) {
    auto src = points.row(from);
    std::copy(src.begin(), src.end(), centers.row(to).begin());
  };
  copy_row(rng.index(n), 0);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), centers.row(0));

  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform(0.0, total);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        if (target < d2[i]) {
          pick = i;
          break;
        }
        target -= d2[i];
      }
      // Guard against rounding landing on an already chosen point.
      while (d2[pick] <= 0.0 && pick > 0) --pick;
    } else {
      pick = rng.index(n);
    }
    copy_row(pick, c);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centers.row(c)));
    }
  }
  return centers;
}

}  // namespace

AnchorSet kmeans(const Matrix& points, std::size_t num_centers, std::uint64_t seed,
                 std::size_t max_iters) {
  const std::size_t n = points.rows();
  if (num_centers == 0) throw DomainError("kmeans: need at least one center");
  if (n < num_centers) {
    throw DomainError("kmeans: " + std::to_string(n) + " points for " +
                      std::to_string(num_centers) + " centers");
  }
  Rng rng(seed);
  AnchorSet out;
  out.centers = seed_plus_plus(points, num_centers, rng);
  out.assignments.assign(n, 0);
  bool changed = false;
  out.inertia = assign(points, out.centers, out.assignments, changed);
  out.inertia_history.push_back(out.inertia);

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    Matrix sums(num_centers, points.cols());
    std::vector<std::size_t> counts(num_centers, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(out.assignments[i]);
      auto src = points.row(i);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
      ++counts[out.assignments[i]];
    }
    for (std::size_t c = 0; c < num_centers; ++c) {
      if (counts[c] == 0) continue;
      auto dst = out.centers.row(c);
      auto src = sums.row(c);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
    }
    for (std::size_t c = 0; c < num_centers; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = squared_distance(points.row(i), out.centers.row(out.assignments[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      auto src = points.row(far);
      std::copy(src.begin(), src.end(), out.centers.row(c).begin());
      --counts[out.assignments[far]];
      out.assignments[far] = static_cast<std::uint32_t>(c);
      counts[c] = 1;
    }
    out.inertia = assign(points, out.centers, out.assignments, changed);
    out.inertia_history.push_back(out.inertia);
    if (!changed) break;
  }
  return out;
}

double default_bandwidth(const Matrix& points, const Matrix& centers, std::size_t p) {
  if (p == 0 || p > centers.rows()) throw DomainError("default_bandwidth: p out of range");
  if (points.rows() == 0) return 1.0;
  std::vector<double> dist(centers.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (std::size_t c = 0; c < centers.rows(); ++c) {
      dist[c] = std::sqrt(squared_distance(points.row(i), centers.row(c)));
    }
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(p - 1), dist.end());
    total += dist[p - 1];
  }
  const double mean = total / static_cast<double>(points.rows());
  return mean > 0.0 ? mean : 1.0;
}

SparseAffinity build_affinity(const Matrix& points, const Matrix& centers, std::size_t p,
                              double bandwidth) {
  if (p == 0 || p > centers.rows()) throw DomainError("build_affinity: need 1 <= p <= N_c");
  if (!(bandwidth > 0.0)) throw DomainError("build_affinity: bandwidth must be positive");
  if (points.cols() != centers.cols()) throw ShapeError("build_affinity: dimension mismatch");

  SparseAffinity z;
  z.num_centers = centers.rows();
  z.bandwidth = bandwidth;
  z.rows.resize(points.rows());
  std::vector<std::pair<double, std::uint32_t>> dist(centers.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (std::size_t c = 0; c < centers.rows(); ++c) {
      dist[c] = {std::sqrt(squared_distance(points.row(i), centers.row(c))),
                 static_cast<std::uint32_t>(c)};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(p), dist.end());
    // Shift by the smallest distance; the normalization cancels it.
    const double shift = dist[0].first;
    double total = 0.0;
    auto& row = z.rows[i];
    row.reserve(p);
    for (std::size_t r = 0; r < p; ++r) {
      const double w = std::exp(-(dist[r].first - shift) / bandwidth);
      row.push_back({dist[r].second, w});
      total += w;
    }
    for (auto& e : row) e.weight /= total;
  }
  return z;
}

AnchorGraph::AnchorGraph(SparseAffinity affinity)
    : affinity_(std::move(affinity)),
      mass_(affinity_.num_centers, 0.0),
      members_(affinity_.num_centers) {
  for (std::size_t i = 0; i < affinity_.rows.size(); ++i) {
    for (const auto& e : affinity_.rows[i]) {
      if (e.center >= affinity_.num_centers) throw ShapeError("AnchorGraph: center index out of range");
      mass_[e.center] += e.weight;
      members_[e.center].push_back({static_cast<std::uint32_t>(i), e.weight});
    }
  }
}

SparseRow AnchorGraph::row(std::size_t i) const {
  if (i >= size()) throw DomainError("AnchorGraph::row: index out of range");
  std::vector<SparseEntry> terms;
  for (const auto& e : affinity_.rows[i]) {
    const double lambda = mass_[e.center];
    if (!(lambda > 0.0)) throw DegenerateAnchorError(e.center);
    const double scale = e.weight / lambda;
    for (const auto& m : members_[e.center]) terms.push_back({m.center, scale * m.weight});
  }
  std::stable_sort(terms.begin(), terms.end(),
                   [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
  SparseRow row;
  for (const auto& t : terms) {
    if (!row.empty() && row.back().index == t.index) {
      row.back().value += t.value;
    } else {
      row.push_back(t);
    }
  }
  return row;
}

SparseRow adjacency_row(std::size_t i, const AnchorGraph& graph) { return graph.row(i); }

std::optional<GaussianThresholds> row_thresholds(const SparseRow& row, std::size_t i,
                                                 double lambda1, double lambda2) {
  // Accumulate offsets from the first support value so a constant row yields
  // exactly mean == value and stddev == 0.
  double shift = 0.0;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& e : row) {
    if (e.index == i || e.value == 0.0) continue;
    if (count == 0) shift = e.value;
    total += e.value - shift;
    ++count;
  }
  if (count < 2) return std::nullopt;
  const double mean = shift + total / static_cast<double>(count);
  double var = 0.0;
  for (const auto& e : row) {
    if (e.index == i || e.value == 0.0) continue;
    var += (e.value - mean) * (e.value - mean);
  }
  GaussianThresholds th;
  th.mean = mean;
  th.stddev = std::sqrt(var / static_cast<double>(count));
  th.positive = mean + lambda1 * th.stddev;
  th.negative = mean - lambda2 * th.stddev;
  th.support_count = count;
  return th;
}

int threshold_label(double a, const GaussianThresholds& th) noexcept {
  if (a >= th.positive) return 1;
  if (th.negative < a && a < th.mean) return -1;
  return 0;
}

SignedRow sign_row(const SparseRow& row, std::size_t i, const GaussianThresholds& th) {
  SignedRow out;
  for (const auto& e : row) {
    if (e.index == i || e.value == 0.0) continue;
    const int label = threshold_label(e.value, th);
    if (label > 0) out.positives.push_back(e.index);
    if (label < 0) out.negatives.push_back(e.index);
  }
  return out;
}

int SignedGraph::label(std::size_t i, std::size_t j) const {
  const SignedRow& r = rows.at(i);
  const auto idx = static_cast<std::uint32_t>(j);
  if (std::binary_search(r.positives.begin(), r.positives.end(), idx)) return 1;
  if (std::binary_search(r.negatives.begin(), r.negatives.end(), idx)) return -1;
  return 0;
}

std::size_t SignedGraph::positive_count() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.positives.size();
  return n;
}

std::size_t SignedGraph::negative_count() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.negatives.size();
  return n;
}

SignedGraph build_signed_graph(const AnchorGraph& graph, double lambda1, double lambda2) {
  SignedGraph out;
  out.rows.resize(graph.size());
  out.isolated.assign(graph.size(), true);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const SparseRow row = graph.row(i);
    const auto th = row_thresholds(row, i, lambda1, lambda2);
    if (!th) continue;
    out.rows[i] = sign_row(row, i, *th);
    out.isolated[i] = out.rows[i].positives.empty() && out.rows[i].negatives.empty();
  }
  return out;
}

PairDraw sample_pairs(const SignedGraph& graph, std::span<const std::uint32_t> batch,
                      std::size_t count, Rng& rng) {
  if (count == 0) throw DomainError("sample_pairs: count must be at least 1");
  std::vector<std::uint32_t> with_pos;
  std::vector<std::uint32_t> with_neg;
  for (std::uint32_t i : batch) {
    if (i >= graph.size()) throw DomainError("sample_pairs: batch index out of range");
    if (!graph.rows[i].positives.empty()) with_pos.push_back(i);
    if (!graph.rows[i].negatives.empty()) with_neg.push_back(i);
  }
  if (with_pos.empty() && with_neg.empty()) {
    throw SamplingError("sample_pairs: no batch member has a labelled partner");
  }
  PairDraw draw;
  draw.pairs.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    int label = rng.coin() ? 1 : -1;
    if ((label > 0 ? with_pos : with_neg).empty()) {
      label = -label;
      ++draw.fallbacks;
    }
    const auto& anchors = label > 0 ? with_pos : with_neg;
    const std::uint32_t i = anchors[rng.index(anchors.size())];
    const auto& partners = label > 0 ? graph.rows[i].positives : graph.rows[i].negatives;
    const std::uint32_t j = partners[rng.index(partners.size())];
    draw.pairs.push_back({i, j, label});
  }
  if (draw.fallbacks > 0) {
    log::warn("sample_pairs: " + std::to_string(draw.fallbacks) + " of " +
              std::to_string(count) + " draws fell back to the other label class");
  }
  return draw;
}

void save_signed_graph(const std::filesystem::path& path, const SignedGraph& graph,
                       const GraphFileHeader& header) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  binary::write_magic(os, kGraphMagic);
  binary::write_u32(os, kGraphVersion);
  binary::write_u32(os, header.videos);
  binary::write_u32(os, header.centers);
  binary::write_u32(os, header.nearest);
  binary::write_f64(os, header.bandwidth);
  binary::write_f64(os, header.lambda1);
  binary::write_f64(os, header.lambda2);
  binary::write_u64(os, header.seed);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    binary::write_u32(os, static_cast<std::uint32_t>(i));
    binary::write_u32(os, static_cast<std::uint32_t>(graph.rows[i].positives.size()));
    for (auto j : graph.rows[i].positives) binary::write_u32(os, j);
    binary::write_u32(os, static_cast<std::uint32_t>(graph.rows[i].negatives.size()));
    for (auto j : graph.rows[i].negatives) binary::write_u32(os, j);
  }
  if (!os) throw IoError("graph write failed: " + path.string());
}

SignedGraph load_signed_graph(const std::filesystem::path& path, GraphFileHeader* header) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  binary::expect_magic(is, kGraphMagic);
  binary::expect_version(is, kGraphVersion);
  GraphFileHeader h;
  h.videos = binary::read_u32(is);
  h.centers = binary::read_u32(is);
  h.nearest = binary::read_u32(is);
  h.bandwidth = binary::read_f64(is);
  h.lambda1 = binary::read_f64(is);
  h.lambda2 = binary::read_f64(is);
  h.seed = binary::read_u64(is);
  SignedGraph g;
  g.rows.resize(h.videos);
  g.isolated.assign(h.videos, false);
  for (std::uint32_t n = 0; n < h.videos; ++n) {
    const std::uint32_t i = binary::read_u32(is);
    if (i >= h.videos) throw IoError("graph file: video index out of range");
    auto read_list = [&](std::vector<std::uint32_t>& list) {
      const std::uint32_t count = binary::read_u32(is);
      list.resize(count);
      for (auto& j : list) {
        j = binary::read_u32(is);
        if (j >= h.videos) throw IoError("graph file: partner index out of range");
      }
    };
    read_list(g.rows[i].positives);
    read_list(g.rows[i].negatives);
    g.isolated[i] = g.rows[i].positives.empty() && g.rows[i].negatives.empty();
  }
  if (header != nullptr) *header = h;
  return g;
}

}  // namespace dkph

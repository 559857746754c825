#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dkph/numerics.hpp"

namespace dkph {

struct AnchorSet {
  Matrix centers;                          // N_c×d
  std::vector<std::uint32_t> assignments;  // nearest center per point
  double inertia = 0.0;
  /// Inertia after each assignment pass, starting with the seeding.
  std::vector<double> inertia_history;
};

/// k-means++ seeding then Lloyd iterations until the assignment is a fixpoint
/// or `max_iters` updates have run. An empty cluster is re-seeded at the
/// point farthest from its current center. Throws DomainError if there are
/// fewer points than centers.
AnchorSet kmeans(const Matrix& points, std::size_t num_centers, std::uint64_t seed,
                 std::size_t max_iters = 100);

struct AffinityEntry {
  std::uint32_t center;
  double weight;
};

/// Row-sparse Z: each point keeps its p nearest centers with softmax weights
/// exp(−‖t̄ − c‖₂/α); all other entries are implicitly zero.
struct SparseAffinity {
  std::vector<std::vector<AffinityEntry>> rows;
  std::size_t num_centers = 0;
  double bandwidth = 1.0;
};

/// Mean Euclidean distance from each point to its p-th nearest center.
double default_bandwidth(const Matrix& points, const Matrix& centers, std::size_t p);

/// Ties in distance go to the lower center index.
SparseAffinity build_affinity(const Matrix& points, const Matrix& centers, std::size_t p,
                              double bandwidth);

struct SparseEntry {
  std::uint32_t index;
  double value;
};

/// Sorted by index; absent indices are zero.
using SparseRow = std::vector<SparseEntry>;

/// A = ZΛ⁻¹Zᵀ with Λ = diag(Zᵀ1), evaluated one row at a time through an
/// inverted center → members index, never materialising N×N.
class AnchorGraph {
 public:
  explicit AnchorGraph(SparseAffinity affinity);

  std::size_t size() const noexcept { return affinity_.rows.size(); }
  const SparseAffinity& affinity() const noexcept { return affinity_; }
  const std::vector<double>& center_mass() const noexcept { return mass_; }

  /// Row i of A, diagonal included. Throws DegenerateAnchorError when a
  /// center in the support of row i has zero total mass.
  SparseRow row(std::size_t i) const;

 private:
  SparseAffinity affinity_;
  std::vector<double> mass_;
  std::vector<std::vector<AffinityEntry>> members_;  // per center: (video, weight)
};

SparseRow adjacency_row(std::size_t i, const AnchorGraph& graph);

struct GaussianThresholds {
  double mean = 0.0;
  double stddev = 0.0;
  double positive = 0.0;  // PT = μ + λ1·ε
  double negative = 0.0;  // NT = μ − λ2·ε
  std::size_t support_count = 0;
};

/// μ and population ε over the nonzero off-diagonal entries of row i.
/// Returns nullopt (isolated node) when fewer than two such entries exist.
std::optional<GaussianThresholds> row_thresholds(const SparseRow& row, std::size_t i,
                                                 double lambda1, double lambda2);

/// +1 if a ≥ PT; −1 if NT < a < μ; 0 otherwise.
int threshold_label(double a, const GaussianThresholds& th) noexcept;

struct SignedRow {
  std::vector<std::uint32_t> positives;
  std::vector<std::uint32_t> negatives;
};

/// Labels the nonzero off-diagonal entries of the row; the diagonal and
/// absent entries stay 0.
SignedRow sign_row(const SparseRow& row, std::size_t i, const GaussianThresholds& th);

/// Row-asymmetric Â: label(i, j) is read from row i.
struct SignedGraph {
  std::vector<SignedRow> rows;
  std::vector<bool> isolated;  // row i carries no labels

  std::size_t size() const noexcept { return rows.size(); }
  int label(std::size_t i, std::size_t j) const;
  std::size_t positive_count() const;
  std::size_t negative_count() const;
};

SignedGraph build_signed_graph(const AnchorGraph& graph, double lambda1, double lambda2);

struct PairSample {
  std::uint32_t i;
  std::uint32_t j;
  int label;  // +1 or −1
};

struct PairDraw {
  std::vector<PairSample> pairs;
  std::size_t fallbacks = 0;  // draws whose coin named an empty class
};

/// Each draw: fair coin for the label, anchor uniform among batch members
/// with a non-empty list for that label, partner uniform from that list.
/// Throws SamplingError when no batch member has any labelled partner.
PairDraw sample_pairs(const SignedGraph& graph, std::span<const std::uint32_t> batch,
                      std::size_t count, Rng& rng);

struct GraphFileHeader {
  std::uint32_t videos = 0;
  std::uint32_t centers = 0;
  std::uint32_t nearest = 0;  // p
  double bandwidth = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  std::uint64_t seed = 0;
};

void save_signed_graph(const std::filesystem::path& path, const SignedGraph& graph,
                       const GraphFileHeader& header);
SignedGraph load_signed_graph(const std::filesystem::path& path, GraphFileHeader* header = nullptr);

}  // namespace dkph

#pragma once

// Brute-force references shared by the unit and acceptance suites. Each
// one recomputes a quantity from its definition with no shared code path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "dkph/binary_code.hpp"
#include "dkph/graph.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

/// Z as a dense N×N_c matrix.
inline Dense dense_affinity(const dkph::SparseAffinity& z) {
  Dense out(z.rows.size(), std::vector<double>(z.num_centers, 0.0));
  for (std::size_t i = 0; i < z.rows.size(); ++i)
    for (const auto& e : z.rows[i]) out[i][e.center] += e.weight;
  return out;
}

/// Dense ZΛ⁻¹Zᵀ with Λ = diag(Zᵀ1).
inline Dense dense_adjacency(const dkph::SparseAffinity& sparse) {
  const Dense z = dense_affinity(sparse);
  const std::size_t n = z.size();
  const std::size_t c = sparse.num_centers;
  std::vector<double> lambda(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) lambda[k] += z[i][k];
  Dense a(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < c; ++k)
        if (lambda[k] > 0.0) a[i][j] += z[i][k] * z[j][k] / lambda[k];
  return a;
}

/// Z row from its definition: p nearest centers (ties to the lower index),
/// weights exp(−dist/α) normalized.
inline std::vector<double> affinity_row(const std::vector<double>& point, const Dense& centers,
                                        std::size_t p, double alpha) {
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < point.size(); ++j) s += (point[j] - centers[k][j]) * (point[j] - centers[k][j]);
    d.push_back({std::sqrt(s), k});
  }
  std::sort(d.begin(), d.end());
  std::vector<double> row(centers.size(), 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < p; ++r) total += std::exp(-d[r].first / alpha);
  for (std::size_t r = 0; r < p; ++r) row[d[r].second] = std::exp(-d[r].first / alpha) / total;
  return row;
}

/// The labelling rule written out directly.
inline int label(double a, double mu, double pt, double nt) {
  if (a >= pt) return 1;
  return (a > nt && a < mu) ? -1 : 0;
}

/// AP@k with denominator min(R, k), from a relevance vector in rank order.
inline double average_precision(const std::vector<bool>& rel, std::size_t relevant_total,
                                std::size_t k) {
  if (relevant_total == 0) return 0.0;
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < std::min(k, rel.size()); ++j) {
    if (rel[j]) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(j + 1);
    }
  }
  return total / static_cast<double>(std::min(relevant_total, k));
}

inline std::size_t bit_differences(const dkph::BinaryCode& a, const dkph::BinaryCode& b) {
  std::size_t d = 0;
  for (std::size_t k = 0; k < a.size(); ++k) d += a[k] != b[k] ? 1 : 0;
  return d;
}

struct Item {
  dkph::BinaryCode code;
  std::int64_t id;
  int label;
};

/// Exhaustive ranking: sort by (distance, id), drop the query's own id.
inline std::vector<const Item*> rank(const std::vector<Item>& db, const dkph::BinaryCode& q,
                                     std::optional<std::int64_t> self) {
  std::vector<const Item*> out;
  for (const Item& it : db)
    if (!self || it.id != *self) out.push_back(&it);
  std::sort(out.begin(), out.end(), [&](const Item* a, const Item* b) {
    const auto da = bit_differences(a->code, q);
    const auto dbb = bit_differences(b->code, q);
    return da != dbb ? da < dbb : a->id < b->id;
  });
  return out;
}

struct PrOracle {
  std::vector<double> recall;
  std::vector<std::optional<double>> precision;
};

/// Radius sweep by counting, averaged over queries with at least one
/// relevant item; precision averages only queries that retrieved something.
inline PrOracle pr_curve(const std::vector<Item>& queries, const std::vector<Item>& db,
                         std::size_t bits) {
  PrOracle out;
  for (std::size_t r = 0; r <= bits; ++r) {
    double rec = 0.0;
    double prec = 0.0;
    std::size_t n_rec = 0;
    std::size_t n_prec = 0;
    for (const Item& q : queries) {
      std::size_t relevant = 0;
      std::size_t retrieved = 0;
      std::size_t hit = 0;
      for (const Item& d : db) {
        if (d.id == q.id) continue;
        const bool rel = d.label == q.label;
        relevant += rel ? 1 : 0;
        if (bit_differences(d.code, q.code) <= r) {
          ++retrieved;
          hit += rel ? 1 : 0;
        }
      }
      if (relevant == 0) continue;
      ++n_rec;
      rec += static_cast<double>(hit) / static_cast<double>(relevant);
      if (retrieved > 0) {
        ++n_prec;
        prec += static_cast<double>(hit) / static_cast<double>(retrieved);
      }
    }
    out.recall.push_back(n_rec == 0 ? 0.0 : rec / static_cast<double>(n_rec));
    out.precision.push_back(n_prec == 0 ? std::nullopt
                                        : std::optional<double>(prec / static_cast<double>(n_prec)));
  }
  return out;
}

}  // namespace oracle

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria can be selected by number: `dkph_acceptance 2 5`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dkph/binary_code.hpp"
#include "dkph/config.hpp"
#include "dkph/dataset.hpp"
#include "dkph/graph.hpp"
#include "dkph/log.hpp"
#include "dkph/numerics.hpp"
#include "dkph/pipeline.hpp"
#include "dkph/retrieval.hpp"
#include "dkph/student.hpp"
#include "dkph/teacher.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace dkph;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Exact fractions for the retrieval oracle.
struct Fraction {
  __int128 num = 0;
  __int128 den = 1;

  static __int128 gcd(__int128 a, __int128 b) {
    if (a < 0) a = -a;
    while (b != 0) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    return a == 0 ? 1 : a;
  }
  Fraction() = default;
  Fraction(__int128 n, __int128 d) : num(n), den(d) {
    const __int128 g = gcd(num, den);
    num /= g;
    den /= g;
  }
  Fraction operator+(const Fraction& o) const { return {num * o.den + o.num * den, den * o.den}; }
  Fraction operator/(std::size_t d) const { return {num, den * static_cast<__int128>(d)}; }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  std::vector<std::string> excluded;
  for (std::uint64_t seed : {1, 2, 3}) {
    const StudentGradCheck g = check_student_gradients(seed);
    worst = std::max(worst, g.report.max_rel_error);
    checked += g.report.param_count;
    excluded = g.excluded;
  }
  const double elapsed = seconds_since(start);
  std::string names;
  for (const auto& n : excluded) names += (names.empty() ? "" : ",") + n;
  return {worst < 1e-4 && elapsed < 30.0 && checked > 0,
          "max rel error " + fmt(worst, 3) + " over " + std::to_string(checked) +
              " entries (3 seeds), excluded {" + names + "}, " + fmt(elapsed, 3) + " s"};
}

Outcome graph_oracle() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(2024);
  double worst_entry = 0.0;
  double worst_sum = 0.0;
  std::size_t instances = 0;
  std::size_t rows = 0;
  auto check = [&](std::size_t n, std::size_t nc, std::size_t p, std::size_t dim) {
    Matrix points = normal_matrix(n, dim, 1.0, rng);
    // Duplicate a few points so some rows share identical supports.
    for (std::size_t i = 1; i < n; i += 7) {
      for (std::size_t c = 0; c < dim; ++c) points(i, c) = points(i - 1, c);
    }
    const AnchorSet anchors = kmeans(points, nc, rng.index(1u << 20));
    const double alpha = default_bandwidth(points, anchors.centers, p) * rng.uniform(0.5, 2.0);
    SparseAffinity z = build_affinity(points, anchors.centers, p, alpha);
    const oracle::Dense dense = oracle::dense_adjacency(z);
    const AnchorGraph graph(std::move(z));
    for (std::size_t i = 0; i < n; ++i) {
      const SparseRow row = adjacency_row(i, graph);
      std::vector<double> full(n, 0.0);
      for (const auto& e : row) full[e.index] = e.value;
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        worst_entry = std::max(worst_entry, std::abs(full[j] - dense[i][j]));
        sum += full[j];
      }
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      ++rows;
    }
    ++instances;
  };
  // Corners first, then random sizes inside the bounds.
  check(1, 1, 1, 2);
  check(20, 20, 20, 3);
  check(200, 20, 20, 4);
  check(200, 1, 1, 4);
  check(200, 20, 1, 4);
  while (instances < 60) {
    const std::size_t nc = 1 + rng.index(20);
    const std::size_t n = nc + rng.index(201 - nc);
    const std::size_t p = 1 + rng.index(nc);
    check(n, nc, p, 1 + rng.index(8));
  }
  const double elapsed = seconds_since(start);
  return {worst_entry <= 1e-12 && worst_sum <= 1e-10 && elapsed < 10.0,
          std::to_string(instances) + " instances, " + std::to_string(rows) +
              " rows, max entry error " + fmt(worst_entry, 3) + ", max row-sum error " +
              fmt(worst_sum, 3) + ", " + fmt(elapsed, 3) + " s"};
}

Outcome thresholding() {
  Rng rng(99);
  std::size_t disagreements = 0;
  std::size_t entries = 0;
  std::size_t at_pt = 0;
  std::size_t at_mu = 0;
  double worst_stats = 0.0;
  const std::vector<double> grid = {0.0, 0.05, 0.1, 0.125, 0.25, 0.5};
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t i = rng.index(60);
    const std::size_t len = 2 + rng.index(40);
    std::set<std::uint32_t> idx;
    if (rng.coin()) idx.insert(static_cast<std::uint32_t>(i));
    while (idx.size() < len) idx.insert(static_cast<std::uint32_t>(rng.index(60)));
    SparseRow row;
    const bool discrete = trial % 2 == 0;
    for (auto j : idx) {
      row.push_back({j, discrete ? grid[rng.index(grid.size())] : rng.uniform(0.0, 1.0)});
    }

    std::vector<double> support;
    for (const auto& e : row)
      if (e.index != i && e.value != 0.0) support.push_back(e.value);

    GaussianThresholds th;
    if (trial % 3 == 0) {
      // Thresholds from the row itself, checked against a direct computation.
      const auto computed = row_thresholds(row, i, 2.0, 1.0);
      if (support.size() < 2) {
        if (computed) ++disagreements;
        continue;
      }
      if (!computed) {
        ++disagreements;
        continue;
      }
      double mu = 0.0;
      for (double a : support) mu += a;
      mu /= static_cast<double>(support.size());
      double var = 0.0;
      for (double a : support) var += (a - mu) * (a - mu);
      const double eps = std::sqrt(var / static_cast<double>(support.size()));
      worst_stats = std::max({worst_stats, std::abs(computed->mean - mu), std::abs(computed->stddev - eps)});
      th = *computed;
    } else {
      // Thresholds placed exactly on entries of the row.
      if (support.size() < 2) continue;
      const double a = support[rng.index(support.size())];
      const double b = support[rng.index(support.size())];
      th.mean = std::min(a, b);
      th.positive = std::max(a, b);
      th.negative = th.mean - rng.uniform(0.0, 0.5);
    }

    const SignedRow s = sign_row(row, i, th);
    std::map<std::uint32_t, int> got;
    for (auto j : s.positives) got[j] = got.count(j) ? 99 : 1;
    for (auto j : s.negatives) got[j] = got.count(j) ? 99 : -1;
    for (const auto& e : row) {
      const int expected = (e.index == i || e.value == 0.0)
                               ? 0
                               : oracle::label(e.value, th.mean, th.positive, th.negative);
      const int actual = got.count(e.index) ? got[e.index] : 0;
      disagreements += expected != actual ? 1 : 0;
      ++entries;
      if (e.index != i && e.value != 0.0) {
        at_pt += e.value == th.positive ? 1 : 0;
        at_mu += (e.value == th.mean && e.value < th.positive) ? 1 : 0;
      }
      got.erase(e.index);
    }
    disagreements += got.size();  // labels on indices absent from the row
  }
  return {disagreements == 0 && worst_stats <= 1e-12 && at_pt > 0 && at_mu > 0,
          std::to_string(entries) + " entries, " + std::to_string(disagreements) +
              " disagreements, " + std::to_string(at_pt) + " entries at PT, " +
              std::to_string(at_mu) + " at mu, max mu/eps error " + fmt(worst_stats, 3)};
}

Outcome binarization() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(4);
  std::size_t bad_bits = 0;
  std::size_t bad_round_trips = 0;
  std::size_t passes = 0;
  const EncoderConfig toy{4, 6, 8, 16};
  std::vector<StudentParams> models;
  for (std::size_t bits : {8, 16, 33, 64}) models.push_back(StudentParams::init(toy, bits, rng));
  // Zero hash layer: every pre-code is exactly 0 and must binarize to +1.
  StudentParams zeroed = StudentParams::init(toy, 8, rng);
  zeroed.hash.weight.fill(0.0);
  zeroed.hash.bias.fill(0.0);
  models.push_back(zeroed);

  std::size_t zero_pre = 0;
  while (passes < 100000) {
    const StudentParams& p = models[passes % models.size()];
    const double scale = passes % 50 == 0 ? 0.0 : rng.uniform(0.0, 20.0);
    const Matrix x = normal_matrix(4, 6, scale, rng);
    const StudentForward f = student_forward(x, p);
    if (f.code.size() != p.bits()) ++bad_bits;
    for (std::size_t k = 0; k < f.code.size(); ++k) {
      const std::int8_t b = f.code[k];
      if (b != 1 && b != -1) ++bad_bits;
      if (f.pre_code(0, k) == 0.0) {
        ++zero_pre;
        if (b != 1) ++bad_bits;
      }
    }
    if (BinaryCode::unpack(f.code.pack(), f.code.size()) != f.code) ++bad_round_trips;
    ++passes;
  }

  // Layout: bit k at byte k/8, position k%8, +1 ↦ 1, padding zero.
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.index(200);
    std::vector<std::int8_t> bits(n);
    std::vector<std::uint8_t> expected((n + 7) / 8, 0);
    for (std::size_t k = 0; k < n; ++k) {
      bits[k] = rng.coin() ? 1 : -1;
      if (bits[k] == 1) expected[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
    }
    const BinaryCode c(bits);
    const auto packed = c.pack();
    if (packed != expected || BinaryCode::unpack(packed, n) != c) ++bad_round_trips;
  }

  std::size_t video_zeros = 0;
  std::size_t wrong_ties = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t frames = 1 + rng.index(8);
    Matrix c(frames, 128);
    for (double& v : c.values()) v = rng.coin() ? 1.0 : -1.0;
    std::size_t ties = 0;
    for (std::size_t k = 0; k < 128; ++k) {
      double s = 0.0;
      for (std::size_t m = 0; m < frames; ++m) s += c(m, k);
      ties += s == 0.0 ? 1 : 0;
    }
    const VideoCode v = video_code_from_frames(FrameCodes{c});
    for (std::int8_t b : v.code.bits()) video_zeros += b == 0 ? 1 : 0;
    wrong_ties += v.ties != ties ? 1 : 0;
  }
  Matrix all_tie(2, 128);
  for (std::size_t k = 0; k < 128; ++k) {
    all_tie(0, k) = rng.coin() ? 1.0 : -1.0;
    all_tie(1, k) = -all_tie(0, k);
  }
  const VideoCode tie = video_code_from_frames(FrameCodes{all_tie});
  const bool tie_ok = tie.ties == 128 &&
                      std::all_of(tie.code.bits().begin(), tie.code.bits().end(),
                                  [](std::int8_t b) { return b == 1; });

  const bool pass = bad_bits == 0 && bad_round_trips == 0 && video_zeros == 0 && wrong_ties == 0 &&
                    tie_ok && zero_pre > 0;
  return {pass, std::to_string(passes) + " forward passes (" + std::to_string(zero_pre) +
                    " exact-zero pre-codes), " + std::to_string(bad_bits) + " bad bits, " +
                    std::to_string(bad_round_trips) + " bad pack round trips, video-code zeros " +
                    std::to_string(video_zeros) + ", all-tie count " + std::to_string(tie.ties) +
                    "/128, " + fmt(seconds_since(start), 3) + " s"};
}

Outcome retrieval_oracle() {
  Rng rng(5);
  double worst = 0.0;
  std::size_t precision_presence = 0;
  std::size_t comparisons = 0;
  for (int db_trial = 0; db_trial < 50; ++db_trial) {
    const std::size_t bits = 1 + rng.index(12);
    const int classes = 1 + static_cast<int>(rng.index(4));
    std::vector<oracle::Item> db;
    std::set<std::int64_t> used;
    while (db.size() < 20) {
      const std::int64_t id = static_cast<std::int64_t>(rng.index(1000));
      if (!used.insert(id).second) continue;
      std::vector<std::int8_t> b(bits);
      for (auto& v : b) v = rng.coin() ? 1 : -1;
      db.push_back({BinaryCode(b), id, static_cast<int>(rng.index(classes))});
    }
    std::vector<oracle::Item> queries;
    for (int q = 0; q < 6; ++q) {
      if (q % 2 == 0) {
        queries.push_back(db[rng.index(db.size())]);  // self-match excluded by id
      } else {
        std::vector<std::int8_t> b(bits);
        for (auto& v : b) v = rng.coin() ? 1 : -1;
        queries.push_back({BinaryCode(b), 5000 + q, static_cast<int>(rng.index(classes + 1))});
      }
    }

    std::vector<BinaryCode> codes;
    std::vector<std::int64_t> ids;
    std::vector<int> labels;
    for (const auto& d : db) {
      codes.push_back(d.code);
      ids.push_back(d.id);
      labels.push_back(d.label);
    }
    const CodeIndex index(codes, ids, labels);
    QuerySet qs;
    for (const auto& q : queries) {
      qs.codes.push_back(q.code);
      qs.ids.push_back(q.id);
      qs.labels.push_back(q.label);
    }

    for (std::size_t k : {1, 3, 5, 10, 19}) {
      Fraction total;
      std::size_t evaluated = 0;
      for (const auto& q : queries) {
        const auto ranked = oracle::rank(db, q.code, q.id);
        std::size_t relevant = 0;
        for (const auto* it : ranked) relevant += it->label == q.label ? 1 : 0;
        if (relevant == 0) continue;
        Fraction ap;
        std::size_t hits = 0;
        for (std::size_t j = 0; j < k && j < ranked.size(); ++j) {
          if (ranked[j]->label != q.label) continue;
          ++hits;
          ap = ap + Fraction(static_cast<__int128>(hits), static_cast<__int128>(j + 1));
        }
        total = total + ap / std::min(relevant, k);
        ++evaluated;
      }
      const double expected = evaluated == 0 ? 0.0 : (total / evaluated).value();
      const MapResult got = map_at_k(qs, index, k);
      worst = std::max(worst, std::abs(got.map - expected));
      if (got.evaluated != evaluated) worst = std::max(worst, 1.0);
      ++comparisons;
    }

    // PR sweep with exact per-radius averages.
    const auto curve = pr_curve(qs, index);
    if (curve.size() != bits + 1) {
      worst = 1.0;
      continue;
    }
    for (std::size_t r = 0; r <= bits; ++r) {
      Fraction recall;
      Fraction precision;
      std::size_t n_recall = 0;
      std::size_t n_precision = 0;
      for (const auto& q : queries) {
        std::size_t relevant = 0, retrieved = 0, hit = 0;
        for (const auto& d : db) {
          if (d.id == q.id) continue;
          const bool rel = d.label == q.label;
          relevant += rel;
          if (oracle::bit_differences(d.code, q.code) <= r) {
            ++retrieved;
            hit += rel;
          }
        }
        if (relevant == 0) continue;
        ++n_recall;
        recall = recall + Fraction(static_cast<__int128>(hit), static_cast<__int128>(relevant));
        if (retrieved > 0) {
          ++n_precision;
          precision = precision + Fraction(static_cast<__int128>(hit), static_cast<__int128>(retrieved));
        }
      }
      const double exp_recall = n_recall == 0 ? 0.0 : (recall / n_recall).value();
      worst = std::max(worst, std::abs(curve[r].recall - exp_recall));
      if (curve[r].precision.has_value() != (n_precision > 0)) {
        ++precision_presence;
      } else if (n_precision > 0) {
        worst = std::max(worst, std::abs(*curve[r].precision - (precision / n_precision).value()));
      }
      ++comparisons;
    }
  }

  // Relevant at ranks 1 and 3 of five, two relevant in total: (1 + 2/3) / 2.
  const double hand = average_precision_at_k({true, false, true, false, false}, 2, 5);
  const bool hand_ok = std::abs(hand - 5.0 / 6.0) <= 1e-15;
  return {worst <= 1e-12 && precision_presence == 0 && hand_ok,
          "50 databases, " + std::to_string(comparisons) + " MAP/PR comparisons, max error " +
              fmt(worst, 3) + ", hand case " + fmt(hand, 6)};
}

// ---------------------------------------------------------------------------
// Criteria 6-8 share one trained desk-scale model.

const fs::path kRoot = DKPH_ACCEPTANCE_DIR;

RunConfig desk_config(const std::string& work) {
  RunConfig c = load_config(DKPH_DESK_CONFIG);
  c.data_dir = kRoot / "data";
  c.work_dir = kRoot / work;
  return c;
}

void ensure_default_data() {
  const SynthConfig s;  // 10 classes × 40 videos, fixed seed
  const SyntheticData data = generate_synthetic(s);
  write_dataset(kRoot / "data", data, s);
}

struct AblationCache {
  std::optional<AblationReport> report;
  double seconds = 0.0;
};

AblationCache& ablation() {
  static AblationCache cache;
  if (!cache.report) {
    const auto start = std::chrono::steady_clock::now();
    ensure_default_data();
    fs::remove_all(kRoot / "ablation");
    cache.report = ablation_suite(desk_config("ablation"));
    cache.seconds = seconds_since(start);
  }
  return cache;
}

double map_at(const AblationVariant& v, std::size_t k) {
  for (const auto& m : v.map)
    if (m.k == k) return m.result.map;
  throw std::runtime_error("no MAP@" + std::to_string(k) + " for variant " + v.name);
}

Outcome directional_ablation() {
  AblationCache& a = ablation();
  const AblationReport& r = *a.report;
  const double full = map_at(r.variant("full"), 5);
  const double recon = map_at(r.variant("recon_only"), 5);
  const double no_bsim = map_at(r.variant("no_bsim"), 5);
  const double no_tsim = map_at(r.variant("no_tsim"), 5);
  const bool pass = full - recon >= 0.10 && no_bsim < no_tsim && full > no_tsim && a.seconds < 600.0;
  return {pass, "MAP@5 at " + std::to_string(r.bits) + " bits: full " + fmt(full) +
                    ", no_tsim " + fmt(no_tsim) + ", no_bsim " + fmt(no_bsim) +
                    ", recon_only " + fmt(recon) + " (margin " + fmt(full - recon) + "), " +
                    fmt(a.seconds, 3) + " s"};
}

Outcome decomposition() {
  const ReconDecomposition& d = ablation().report->recon;
  // The factor compares the error increases over the intact model, the
  // quantities the reference percentages describe.
  const double delta_l = d.remove_l - d.intact;
  const double delta_b = d.remove_b - d.intact;
  const double factor = delta_b > 0.0 ? delta_l / delta_b : (delta_l > 0.0 ? INFINITY : 0.0);
  const double mean_rise = d.l_mean / d.intact - 1.0;
  const bool pass = delta_l > 0.0 && factor >= 5.0 && mean_rise >= 0.30;
  return {pass, "intact " + fmt(d.intact) + ", remove b +" + fmt(100.0 * delta_b / d.intact, 3) +
                    "%, remove l +" + fmt(100.0 * delta_l / d.intact, 3) + "% (increase factor " +
                    fmt(factor, 3) + ", absolute ratio " + fmt(d.remove_l / d.remove_b, 3) +
                    "), l frozen to mean +" + fmt(100.0 * mean_rise, 3) + "%"};
}

std::map<std::string, std::string> artifact_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name.size() >= 12 && name.ends_with(".timing.json")) continue;  // wall-clock sidecars
    std::ifstream is(e.path(), std::ios::binary);
    out[name] = std::string(std::istreambuf_iterator<char>(is), {});
  }
  return out;
}

Outcome determinism() {
  ensure_default_data();
  fs::remove_all(kRoot / "run_a");
  fs::remove_all(kRoot / "run_b");
  const PipelineReport a = run_pipeline(desk_config("run_a"));
  const PipelineReport b = run_pipeline(desk_config("run_b"));
  const auto fa = artifact_bytes(kRoot / "run_a");
  const auto fb = artifact_bytes(kRoot / "run_b");
  std::size_t ckpt = 0, codes = 0, differing = 0;
  std::string first_diff;
  std::set<std::string> names;
  for (const auto& [n, _] : fa) names.insert(n);
  for (const auto& [n, _] : fb) names.insert(n);
  for (const auto& n : names) {
    ckpt += n.ends_with(".ckpt") ? 1 : 0;
    codes += n.ends_with(".codes") ? 1 : 0;
    const auto ia = fa.find(n);
    const auto ib = fb.find(n);
    if (ia == fa.end() || ib == fb.end() || ia->second != ib->second) {
      ++differing;
      if (first_diff.empty()) first_diff = n;
    }
  }
  const bool pass = a.config_hash == b.config_hash && differing == 0 && fa.count("report.json") &&
                    ckpt > 0 && codes > 0;
  return {pass, std::to_string(names.size()) + " artifacts compared (" + std::to_string(ckpt) +
                    " checkpoints, " + std::to_string(codes) + " codes files, report.json), " +
                    std::to_string(differing) + " differ" +
                    (first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  log::threshold() = log::Level::kError;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"graph oracle equivalence", graph_oracle},
      {"thresholding correctness", thresholding},
      {"binarization invariants", binarization},
      {"retrieval oracle", retrieval_oracle},
      {"directional ablation", directional_ablation},
      {"information decomposition", decomposition},
      {"determinism", determinism},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::atoi(argv[i])));

  int failures = 0;
  for (std::size_t n = 1; n <= criteria.size(); ++n) {
    if (!selected.empty() && !selected.count(n)) continue;
    Outcome o;
    try {
      o = criteria[n - 1].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << n << " (" << criteria[n - 1].first
              << "): " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

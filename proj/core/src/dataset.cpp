#include "dkph/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>

#include "dkph/binary_io.hpp"
#include "dkph/errors.hpp"
#include "dkph/retrieval.hpp"

namespace dkph {

namespace {

constexpr std::string_view kFeatureMagic = "DKPH";
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::size_t kDriftHarmonics = 2;

Matrix class_trajectory(const SynthConfig& c, Rng& rng) {
  Matrix proto(c.frames, c.dim);
  std::vector<double> base(c.dim);
  for (double& v : base) v = rng.normal();
  // Smooth drift: a few low-frequency harmonics along random directions,
  // scaled so the per-entry RMS of the drift is `temporal_drift`.
  std::vector<std::vector<double>> directions(kDriftHarmonics, std::vector<double>(c.dim));
  std::vector<double> phases(kDriftHarmonics);
  for (std::size_t h = 0; h < kDriftHarmonics; ++h) {
    for (double& v : directions[h]) v = rng.normal();
    phases[h] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const double amplitude = c.temporal_drift * std::sqrt(2.0 / static_cast<double>(kDriftHarmonics));
  for (std::size_t m = 0; m < c.frames; ++m) {
    const double pos = static_cast<double>(m) / static_cast<double>(c.frames);
    for (std::size_t j = 0; j < c.dim; ++j) {
      double drift = 0.0;
      for (std::size_t h = 0; h < kDriftHarmonics; ++h) {
        drift += directions[h][j] *
                 std::sin(2.0 * std::numbers::pi * static_cast<double>(h + 1) * pos + phases[h]);
      }
      proto(m, j) = base[j] + amplitude * drift;
    }
  }
  return proto;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_classes < 1 || videos_per_class < 1 || frames < 1 || dim < 1) {
    throw DomainError("SynthConfig: counts must be at least 1");
  }
  if (!(intra_class_noise >= 0.0) || !(temporal_drift >= 0.0)) {
    throw DomainError("SynthConfig: noise parameters must be non-negative");
  }
  if (!(train_fraction >= 0.0) || !(query_fraction >= 0.0) ||
      train_fraction + query_fraction > 1.0) {
    throw DomainError("SynthConfig: split fractions must be non-negative and sum to at most 1");
  }
}

SyntheticData generate_synthetic(const SynthConfig& c) {
  c.validate();
  Rng rng(c.seed);
  SyntheticData out;
  for (std::size_t k = 0; k < c.num_classes; ++k) out.prototypes.push_back(class_trajectory(c, rng));

  const double rms = std::sqrt(1.0 + c.temporal_drift * c.temporal_drift +
                               c.intra_class_noise * c.intra_class_noise);
  const auto n_train = static_cast<std::size_t>(std::llround(c.train_fraction * static_cast<double>(c.videos_per_class)));
  const auto n_query = static_cast<std::size_t>(std::llround(c.query_fraction * static_cast<double>(c.videos_per_class)));
  for (std::size_t k = 0; k < c.num_classes; ++k) {
    for (std::size_t v = 0; v < c.videos_per_class; ++v) {
      Matrix video = out.prototypes[k];
      for (double& x : video.values()) x += rng.normal(0.0, 1.0) * c.intra_class_noise;
      if (c.unit_scale) video = scale(video, 1.0 / rms);
      VideoSet& split = v < n_train ? out.train : (v < n_train + n_query ? out.query : out.database);
      split.videos.push_back(std::move(video));
      split.labels.push_back(static_cast<int>(k));
    }
  }

  if (c.unit_scale) {
    for (Matrix& p : out.prototypes) p = scale(p, 1.0 / rms);
  }

  std::size_t correct = 0;
  std::size_t total = 0;
  for (const VideoSet* s : {&out.train, &out.query, &out.database}) {
    correct += static_cast<std::size_t>(std::llround(nearest_prototype_accuracy(*s, out.prototypes) *
                                                     static_cast<double>(s->size())));
    total += s->size();
  }
  out.prototype_accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  return out;
}

double nearest_prototype_accuracy(const VideoSet& set, std::span<const Matrix> prototypes) {
  if (set.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < prototypes.size(); ++k) {
      const double d = squared_distance(set.videos[i].values(), prototypes[k].values());
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (static_cast<int>(best) == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

void save_features(const std::filesystem::path& path, std::span<const Matrix> videos) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const std::size_t m = videos.empty() ? 0 : videos.front().rows();
  const std::size_t d = videos.empty() ? 0 : videos.front().cols();
  binary::write_magic(os, kFeatureMagic);
  binary::write_u32(os, kFeatureVersion);
  binary::write_u32(os, static_cast<std::uint32_t>(videos.size()));
  binary::write_u32(os, static_cast<std::uint32_t>(m));
  binary::write_u32(os, static_cast<std::uint32_t>(d));
  for (const Matrix& v : videos) {
    if (v.rows() != m || v.cols() != d) throw ShapeError("save_features: videos differ in shape");
    for (double x : v.values()) binary::write_f32(os, static_cast<float>(x));
  }
  if (!os) throw IoError("feature write failed: " + path.string());
}

std::vector<Matrix> load_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  binary::expect_magic(is, kFeatureMagic);
  binary::expect_version(is, kFeatureVersion);
  const std::uint32_t n = binary::read_u32(is);
  const std::uint32_t m = binary::read_u32(is);
  const std::uint32_t d = binary::read_u32(is);
  std::vector<Matrix> videos;
  videos.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Matrix v(m, d);
    for (double& x : v.values()) x = binary::read_f32(is);
    videos.push_back(std::move(v));
  }
  return videos;
}

void write_dataset(const std::filesystem::path& dir, const SyntheticData& data,
                   const SynthConfig& config) {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, const VideoSet*> splits[] = {
      {"train", &data.train}, {"query", &data.query}, {"database", &data.database}};
  for (const auto& [name, set] : splits) {
    save_features(dir / (std::string(name) + ".feat"), set->videos);
    save_labels(dir / (std::string(name) + ".labels"), set->labels);
  }
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  manifest << std::setprecision(17);
  manifest << "num_classes = " << config.num_classes << '\n'
           << "videos_per_class = " << config.videos_per_class << '\n'
           << "frames = " << config.frames << '\n'
           << "dim = " << config.dim << '\n'
           << "intra_class_noise = " << config.intra_class_noise << '\n'
           << "temporal_drift = " << config.temporal_drift << '\n'
           << "seed = " << config.seed << '\n'
           << "unit_scale = " << (config.unit_scale ? "true" : "false") << '\n'
           << "train = " << data.train.size() << '\n'
           << "query = " << data.query.size() << '\n'
           << "database = " << data.database.size() << '\n'
           << "prototype_accuracy = " << data.prototype_accuracy << '\n';
  if (!manifest) throw IoError("cannot write manifest in " + dir.string());
}

VideoSet load_split(const std::filesystem::path& dir, const std::string& split) {
  VideoSet set;
  set.videos = load_features(dir / (split + ".feat"));
  set.labels = load_labels(dir / (split + ".labels"));
  if (set.labels.size() != set.videos.size()) {
    throw IoError("split '" + split + "': " + std::to_string(set.videos.size()) + " videos but " +
                  std::to_string(set.labels.size()) + " labels");
  }
  return set;
}

}  // namespace dkph

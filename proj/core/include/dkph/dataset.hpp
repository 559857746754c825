#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dkph/numerics.hpp"

namespace dkph {

/// Videos of one split; each video is an M×D frame feature matrix.
struct VideoSet {
  std::vector<Matrix> videos;
  std::vector<int> labels;

  std::size_t size() const noexcept { return videos.size(); }
  std::size_t frames() const { return videos.empty() ? 0 : videos.front().rows(); }
  std::size_t dim() const { return videos.empty() ? 0 : videos.front().cols(); }
};

struct SynthConfig {
  std::size_t num_classes = 10;
  std::size_t videos_per_class = 40;
  std::size_t frames = 25;
  std::size_t dim = 64;
  double intra_class_noise = 4.0;
  double temporal_drift = 3.0;
  std::uint64_t seed = 7;
  // Per-class split fractions; the remainder is the database.
  double train_fraction = 0.5;
  double query_fraction = 0.1;
  /// Divide every feature by √(1 + drift² + noise²), the expected per-entry
  /// RMS, so losses stay on the same scale whatever the noise level.
  bool unit_scale = true;

  void validate() const;
};

struct SyntheticData {
  VideoSet train;
  VideoSet query;
  VideoSet database;
  /// Per class: M×D prototype trajectory.
  std::vector<Matrix> prototypes;
  /// Accuracy of labelling every video by its nearest prototype trajectory.
  double prototype_accuracy = 0.0;
};

/// Class c gets a base vector plus a smooth per-frame drift of magnitude
/// `temporal_drift`; each video adds i.i.d. Gaussian frame noise of scale
/// `intra_class_noise`. Splits are stratified per class.
SyntheticData generate_synthetic(const SynthConfig& config);

double nearest_prototype_accuracy(const VideoSet& set, std::span<const Matrix> prototypes);

// Feature file: "DKPH", u32 version, u32 N, u32 M, u32 D, then N·M·D
// little-endian f32 row-major.
void save_features(const std::filesystem::path& path, std::span<const Matrix> videos);
std::vector<Matrix> load_features(const std::filesystem::path& path);

/// Writes <split>.feat and <split>.labels for train, query and database,
/// plus a manifest.txt describing the generation.
void write_dataset(const std::filesystem::path& dir, const SyntheticData& data,
                   const SynthConfig& config);

VideoSet load_split(const std::filesystem::path& dir, const std::string& split);

}  // namespace dkph

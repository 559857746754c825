#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dkph/student.hpp"

namespace dkph {

/// Every tunable of a pipeline run. Serialized as a flat `key = value` text
/// file; unknown or repeated keys are errors.
struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path work_dir = "run";

  std::uint64_t seed = 1;

  // Encoder (shared shape for teacher and student).
  std::size_t model_dim = 256;
  std::size_t ffn_dim = 512;

  // Training schedule.
  std::size_t teacher_epochs = 60;
  std::size_t student_epochs = 48;
  std::size_t batch_size = 256;
  std::size_t pairs_per_batch = 0;
  std::vector<std::size_t> code_bits = {16, 32, 64};

  // Graph.
  std::size_t num_centers = 20;
  std::size_t nearest_centers = 10;
  std::size_t kmeans_iters = 100;

  LossWeights weights;

  // Evaluation.
  std::vector<std::size_t> map_k = {5, 20, 60, 100};
  std::size_t ablation_bits = 16;

  void validate() const;

  /// Canonical `key = value` text, keys in fixed order, paths included.
  std::string to_text() const;
  /// Hex FNV-1a of the canonical text without the two path keys.
  std::string hash() const;
};

RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

/// 64-bit FNV-1a, hex encoded; used for config and artifact fingerprints.
std::string fnv1a_hex(std::string_view bytes);
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);

}  // namespace dkph

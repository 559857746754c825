#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dkph/config.hpp"
#include "dkph/dataset.hpp"
#include "dkph/graph.hpp"
#include "dkph/retrieval.hpp"
#include "dkph/student.hpp"
#include "dkph/teacher.hpp"

namespace dkph {

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
  bool cached = false;
};

struct MapAtK {
  std::size_t k = 0;
  MapResult result;
};

struct BitsResult {
  std::size_t bits = 0;
  std::vector<MapAtK> map;
  std::vector<PrPoint> pr;
  double final_loss = 0.0;
};

struct PipelineReport {
  std::string config_hash;
  bool reconstruction_only = false;  // γ1 = γ2 = 0
  std::vector<BitsResult> results;
  std::vector<StageTiming> timings;
  /// Contents of report.json. Wall times live in report.timing.json so the
  /// report itself stays byte-identical across reruns.
  std::string json;
};

struct ReconDecomposition {
  double intact = 0.0;
  double remove_b = 0.0;
  double remove_l = 0.0;
  double l_mean = 0.0;
};

struct AblationVariant {
  std::string name;
  std::vector<MapAtK> map;
};

struct AblationReport {
  std::string config_hash;
  std::size_t bits = 0;
  std::vector<AblationVariant> variants;  // "full" first
  ReconDecomposition recon;               // full model, database split
  std::vector<StageTiming> timings;
  std::string json;

  const AblationVariant& variant(const std::string& name) const;
};

/// Stage runner over one work directory. Every stage writes its artifacts
/// next to a `<stage>.stamp` holding a fingerprint of the config keys it
/// reads and of its upstream stamps; a stage whose stamp matches is loaded
/// instead of recomputed.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  const RunConfig& config() const noexcept { return config_; }
  const std::vector<StageTiming>& timings() const noexcept { return timings_; }

  /// Teacher parameters after warm-up (teacher.ckpt).
  const TeacherParams& teacher();
  /// Teacher embeddings, anchors and signed graph (embeddings.ckpt,
  /// anchors.ckpt, graph.dkpg).
  const SignedGraph& graph();
  const TeacherArtifacts& anchors();
  /// Student at K bits trained with the configured weights
  /// (student_K<bits>.ckpt).
  const StudentParams& student(std::size_t bits);
  /// query_K<bits>.codes and database_K<bits>.codes.
  void encode(std::size_t bits);
  BitsResult evaluate(std::size_t bits);

  PipelineReport run();
  AblationReport ablate();

 private:
  struct StudentVariant {
    std::string name;
    LossWeights weights;
    DecoderInput input = DecoderInput::kDualStream;
  };

  const VideoSet& split(const std::string& name);
  const std::string& data_key();
  std::string stage_key(const std::string& upstream, const std::string& body) const;
  template <class F>
  void timed(const std::string& stage, bool cached, F&& f);
  const StudentParams& train_variant(const StudentVariant& variant, std::size_t bits);
  std::filesystem::path path(const std::string& name) const;
  bool stamp_matches(const std::string& stage, const std::string& key,
                     std::initializer_list<std::string> artifacts) const;
  void write_stamp(const std::string& stage, const std::string& key) const;
  EncoderConfig encoder_config();

  RunConfig config_;
  std::vector<StageTiming> timings_;

  std::map<std::string, VideoSet> splits_;
  std::optional<std::string> data_key_;
  std::optional<std::string> teacher_key_;
  std::optional<TeacherParams> teacher_;
  std::vector<double> teacher_losses_;
  std::optional<std::string> graph_key_;
  std::optional<SignedGraph> graph_;
  std::optional<TeacherArtifacts> anchors_;
  GraphFileHeader graph_header_;
  struct TrainedStudent {
    std::string stage;
    std::string key;
    StudentParams params;
    double final_loss = 0.0;
  };
  std::map<std::string, TrainedStudent> students_;
};

PipelineReport run_pipeline(const RunConfig& config);
AblationReport ablation_suite(const RunConfig& config);

}  // namespace dkph

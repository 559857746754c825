// dkph: command-line front end for the hashing pipeline.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dkph/config.hpp"
#include "dkph/dataset.hpp"
#include "dkph/errors.hpp"
#include "dkph/log.hpp"
#include "dkph/pipeline.hpp"
#include "dkph/student.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string data_dir;
  std::string work_dir;

  dkph::RunConfig load() const {
    dkph::RunConfig c = config_path.empty() ? dkph::RunConfig{} : dkph::load_config(config_path);
    if (!data_dir.empty()) c.data_dir = data_dir;
    if (!work_dir.empty()) c.work_dir = work_dir;
    c.validate();
    return c;
  }
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "Run configuration (key = value file)");
  cmd->add_option("--data-dir", o.data_dir, "Override data_dir from the config");
  cmd->add_option("--work-dir", o.work_dir, "Override work_dir from the config");
}

std::vector<std::size_t> bits_or_all(const std::vector<std::size_t>& bits, const dkph::RunConfig& c) {
  return bits.empty() ? c.code_bits : bits;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-stream knowledge-preserving video hashing"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  CommonOptions common;

  dkph::SynthConfig synth;
  std::string synth_out = "data";
  auto* synth_cmd = app.add_subcommand("synth-data", "Generate a synthetic video feature set");
  synth_cmd->add_option("-o,--out", synth_out, "Output directory")->capture_default_str();
  synth_cmd->add_option("--classes", synth.num_classes)->capture_default_str();
  synth_cmd->add_option("--videos-per-class", synth.videos_per_class)->capture_default_str();
  synth_cmd->add_option("--frames", synth.frames)->capture_default_str();
  synth_cmd->add_option("--dim", synth.dim)->capture_default_str();
  synth_cmd->add_option("--noise", synth.intra_class_noise)->capture_default_str();
  synth_cmd->add_option("--drift", synth.temporal_drift)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();

  auto* teacher_cmd = app.add_subcommand("train-teacher", "Warm up the teacher on the cloze task");
  auto* graph_cmd = app.add_subcommand("build-graph", "Cluster teacher embeddings and build the signed graph");
  std::vector<std::size_t> bits;
  auto* student_cmd = app.add_subcommand("train-student", "Train students at each code length");
  auto* encode_cmd = app.add_subcommand("encode", "Write query and database codes");
  auto* eval_cmd = app.add_subcommand("eval", "MAP@k and PR curves");
  auto* run_cmd = app.add_subcommand("run", "Every stage, then report.json");
  auto* ablate_cmd = app.add_subcommand("ablate", "Ablation variants and reconstruction decomposition");
  for (auto* cmd : {teacher_cmd, graph_cmd, student_cmd, encode_cmd, eval_cmd, run_cmd, ablate_cmd}) {
    add_common(cmd, common);
  }
  for (auto* cmd : {student_cmd, encode_cmd, eval_cmd}) {
    cmd->add_option("-k,--bits", bits, "Code lengths (default: code_bits from the config)");
  }

  std::uint64_t gc_seed = 1;
  double gc_step = 1e-5;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the student loss");
  gc_cmd->add_option("--seed", gc_seed)->capture_default_str();
  gc_cmd->add_option("--step", gc_step)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  if (verbose) dkph::log::threshold() = dkph::log::Level::kDebug;

  try {
    if (synth_cmd->parsed()) {
      const dkph::SyntheticData data = dkph::generate_synthetic(synth);
      dkph::write_dataset(synth_out, data, synth);
      std::cout << "wrote " << data.train.size() << "/" << data.query.size() << "/"
                << data.database.size() << " train/query/database videos to " << synth_out
                << " (nearest-prototype accuracy " << data.prototype_accuracy << ")\n";
    } else if (gc_cmd->parsed()) {
      const dkph::StudentGradCheck gc = dkph::check_student_gradients(gc_seed, gc_step);
      std::cout << "max relative error " << gc.report.max_rel_error << " over "
                << gc.report.param_count << " scalars in " << gc.checked_parameters
                << " parameter matrices; excluded:";
      for (const std::string& name : gc.excluded) std::cout << ' ' << name;
      std::cout << '\n';
      return gc.report.max_rel_error < 1e-4 ? EXIT_SUCCESS : EXIT_FAILURE;
    } else {
      dkph::Pipeline pipeline(common.load());
      const dkph::RunConfig& c = pipeline.config();
      if (teacher_cmd->parsed()) {
        pipeline.teacher();
      } else if (graph_cmd->parsed()) {
        const dkph::SignedGraph& g = pipeline.graph();
        std::cout << g.positive_count() << " positive, " << g.negative_count() << " negative edges\n";
      } else if (student_cmd->parsed()) {
        for (std::size_t k : bits_or_all(bits, c)) pipeline.student(k);
      } else if (encode_cmd->parsed()) {
        for (std::size_t k : bits_or_all(bits, c)) pipeline.encode(k);
      } else if (eval_cmd->parsed()) {
        for (std::size_t k : bits_or_all(bits, c)) {
          const dkph::BitsResult r = pipeline.evaluate(k);
          std::cout << "K=" << k;
          for (const dkph::MapAtK& m : r.map) std::cout << "  MAP@" << m.k << "=" << m.result.map;
          std::cout << '\n';
        }
      } else if (run_cmd->parsed()) {
        std::cout << pipeline.run().json;
      } else if (ablate_cmd->parsed()) {
        std::cout << pipeline.ablate().json;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "dkph: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}

#include "dkph/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "dkph/checkpoint.hpp"
#include "dkph/errors.hpp"
#include "dkph/log.hpp"

namespace dkph {

namespace {

using Json = nlohmann::ordered_json;

const char* const kSplits[] = {"train", "query", "database"};

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os << text;
  if (!os) throw IoError("cannot write " + path.string());
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& label) {
  return fnv1a(std::to_string(seed) + ":" + label);
}

// Selected `key = value` lines of the canonical config text.
std::string config_lines(const RunConfig& c, std::initializer_list<std::string> keys) {
  std::istringstream is(c.to_text());
  std::string out;
  std::string line;
  while (std::getline(is, line)) {
    const std::string key = line.substr(0, line.find(' '));
    for (const std::string& k : keys) {
      if (k == key) out += line + "\n";
    }
  }
  return out;
}

std::string weights_text(const LossWeights& w, DecoderInput input) {
  std::ostringstream os;
  os << std::setprecision(17) << "gamma1=" << w.gamma1 << "\ngamma2=" << w.gamma2
     << "\neta=" << w.eta << "\nbeta=" << w.beta << "\nlearning_rate=" << w.learning_rate
     << "\ninput=" << static_cast<int>(input) << "\n";
  return os.str();
}

Matrix row_of(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Json map_json(const std::vector<MapAtK>& map) {
  Json out = Json::object();
  for (const MapAtK& m : map) {
    out[std::to_string(m.k)] = {
        {"map", m.result.map}, {"evaluated", m.result.evaluated}, {"skipped", m.result.skipped}};
  }
  return out;
}

Json timings_json(const std::string& hash, const std::vector<StageTiming>& timings) {
  Json stages = Json::array();
  for (const StageTiming& t : timings) {
    stages.push_back({{"stage", t.stage}, {"seconds", t.seconds}, {"cached", t.cached}});
  }
  return {{"config_hash", hash}, {"stages", stages}};
}

QuerySet make_queries(std::vector<BinaryCode> codes, const VideoSet& set, std::size_t id_offset) {
  QuerySet q;
  q.codes = std::move(codes);
  q.labels = set.labels;
  for (std::size_t i = 0; i < set.size(); ++i) q.ids.push_back(static_cast<std::int64_t>(id_offset + i));
  return q;
}

}  // namespace

const AblationVariant& AblationReport::variant(const std::string& name) const {
  for (const AblationVariant& v : variants) {
    if (v.name == name) return v;
  }
  throw DomainError("no ablation variant '" + name + "'");
}

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) {
  config_.validate();
  std::filesystem::create_directories(config_.work_dir);
}

std::filesystem::path Pipeline::path(const std::string& name) const { return config_.work_dir / name; }

bool Pipeline::stamp_matches(const std::string& stage, const std::string& key,
                             std::initializer_list<std::string> artifacts) const {
  const auto stamp = path(stage + ".stamp");
  if (!std::filesystem::exists(stamp)) return false;
  for (const std::string& a : artifacts) {
    if (!std::filesystem::exists(path(a))) return false;
  }
  return read_bytes(stamp) == key + "\n";
}

void Pipeline::write_stamp(const std::string& stage, const std::string& key) const {
  write_text(path(stage + ".stamp"), key + "\n");
}

std::string Pipeline::stage_key(const std::string& upstream, const std::string& body) const {
  return fnv1a_hex(upstream + "\n" + body);
}

template <class F>
void Pipeline::timed(const std::string& stage, bool cached, F&& f) {
  const auto start = std::chrono::steady_clock::now();
  try {
    f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  timings_.push_back({stage, elapsed.count(), cached});
  log::info(stage + (cached ? ": up to date" : ": done in " + std::to_string(elapsed.count()) + " s"));
}

const VideoSet& Pipeline::split(const std::string& name) {
  if (auto it = splits_.find(name); it != splits_.end()) return it->second;
  VideoSet set;
  timed("load-" + name, false, [&] { set = load_split(config_.data_dir, name); });
  return splits_.emplace(name, std::move(set)).first->second;
}

const std::string& Pipeline::data_key() {
  if (!data_key_) {
    std::uint64_t state = 0xcbf29ce484222325ULL;
    timed("hash-data", false, [&] {
      for (const char* s : kSplits) {
        state = fnv1a(read_bytes(config_.data_dir / (std::string(s) + ".feat")), state);
        state = fnv1a(read_bytes(config_.data_dir / (std::string(s) + ".labels")), state);
      }
    });
    data_key_ = fnv1a_hex(std::to_string(state));
  }
  return *data_key_;
}

EncoderConfig Pipeline::encoder_config() {
  const VideoSet& train = split("train");
  if (train.size() == 0) throw StageError("load-train", "training split is empty");
  return EncoderConfig{train.frames(), train.dim(), config_.model_dim, config_.ffn_dim};
}

const TeacherParams& Pipeline::teacher() {
  if (teacher_) return *teacher_;
  const std::string key =
      stage_key(data_key(), "teacher\n" + config_lines(config_, {"model_dim", "ffn_dim", "teacher_epochs",
                                                                 "batch_size", "learning_rate",
                                                                 "mask_ratio", "seed"}));
  const EncoderConfig enc = encoder_config();
  const bool cached = stamp_matches("teacher", key, {"teacher.ckpt"});
  timed("train-teacher", cached, [&] {
    if (cached) {
      const NamedMatrices entries = load_checkpoint(path("teacher.ckpt"));
      Rng scratch(0);
      TeacherParams p = TeacherParams::init(enc, scratch);
      import_params(p, entries, "teacher.");
      const auto losses = find_matrix(entries, "eval_losses").values();
      teacher_losses_.assign(losses.begin(), losses.end());
      teacher_ = std::move(p);
      return;
    }
    TeacherTrainConfig train{config_.teacher_epochs, config_.batch_size,
                             config_.weights.learning_rate, config_.weights.mask_ratio,
                             derive_seed(config_.seed, "teacher")};
    TeacherTrainResult result = train_teacher(split("train").videos, enc, train);
    NamedMatrices entries = export_params(result.params, "teacher.");
    entries.push_back({"eval_losses", row_of(result.eval_losses)});
    save_checkpoint(path("teacher.ckpt"), entries);
    write_stamp("teacher", key);
    teacher_losses_ = std::move(result.eval_losses);
    teacher_ = std::move(result.params);
  });
  teacher_key_ = key;
  return *teacher_;
}

const SignedGraph& Pipeline::graph() {
  if (graph_) return *graph_;
  const TeacherParams& t = teacher();
  const VideoSet& train = split("train");
  const std::string key =
      stage_key(*teacher_key_, "graph\n" + config_lines(config_, {"num_centers", "nearest_centers",
                                                                  "kmeans_iters", "bandwidth",
                                                                  "lambda1", "lambda2", "seed"}));
  const bool cached = stamp_matches("graph", key, {"embeddings.ckpt", "anchors.ckpt", "graph.dkpg"});
  timed("build-graph", cached, [&] {
    if (cached) {
      const NamedMatrices anchors = load_checkpoint(path("anchors.ckpt"));
      TeacherArtifacts a;
      a.centers = find_matrix(anchors, "centers");
      for (double v : find_matrix(anchors, "anchor_of").values()) {
        a.anchor_of.push_back(static_cast<std::uint32_t>(v));
      }
      anchors_ = std::move(a);
      graph_ = load_signed_graph(path("graph.dkpg"), &graph_header_);
      return;
    }
    const Matrix embeddings = teacher_video_embeddings(train.videos, t);
    save_checkpoint(path("embeddings.ckpt"), {{"train", embeddings}});
    if (config_.num_centers > train.size()) {
      throw ConfigError("num_centers exceeds the training set size");
    }
    AnchorSet set = kmeans(embeddings, config_.num_centers, derive_seed(config_.seed, "kmeans"),
                           config_.kmeans_iters);
    const std::size_t p = config_.nearest_centers;
    const double bandwidth = config_.weights.bandwidth > 0.0
                                 ? config_.weights.bandwidth
                                 : default_bandwidth(embeddings, set.centers, p);
    AnchorGraph anchor_graph(build_affinity(embeddings, set.centers, p, bandwidth));
    SignedGraph signed_graph =
        build_signed_graph(anchor_graph, config_.weights.lambda1, config_.weights.lambda2);

    std::vector<double> anchor_of(set.assignments.begin(), set.assignments.end());
    save_checkpoint(path("anchors.ckpt"), {{"centers", set.centers},
                                           {"anchor_of", row_of(anchor_of)},
                                           {"inertia", Matrix(1, 1, set.inertia)}});
    graph_header_ = GraphFileHeader{static_cast<std::uint32_t>(train.size()),
                                    static_cast<std::uint32_t>(config_.num_centers),
                                    static_cast<std::uint32_t>(p),
                                    bandwidth,
                                    config_.weights.lambda1,
                                    config_.weights.lambda2,
                                    config_.seed};
    save_signed_graph(path("graph.dkpg"), signed_graph, graph_header_);
    write_stamp("graph", key);
    anchors_ = TeacherArtifacts{std::move(set.centers), std::move(set.assignments)};
    graph_ = std::move(signed_graph);
  });
  graph_key_ = key;
  return *graph_;
}

const TeacherArtifacts& Pipeline::anchors() {
  graph();
  return *anchors_;
}

const StudentParams& Pipeline::train_variant(const StudentVariant& variant, std::size_t bits) {
  const std::string stage = (variant.name.empty() ? "student" : "student_" + variant.name) +
                            "_K" + std::to_string(bits);
  if (auto it = students_.find(stage); it != students_.end()) return it->second.params;

  const SignedGraph& g = graph();
  const TeacherArtifacts& a = anchors();
  const VideoSet& train = split("train");
  const EncoderConfig enc = encoder_config();
  const std::string key = stage_key(
      *graph_key_, "student\nbits=" + std::to_string(bits) + "\n" +
                       config_lines(config_, {"student_epochs", "batch_size", "pairs_per_batch",
                                              "mask_ratio", "seed"}) +
                       weights_text(variant.weights, variant.input));
  const std::string artifact = stage + ".ckpt";
  const bool cached = stamp_matches(stage, key, {artifact});
  TrainedStudent trained{stage, key, {}, 0.0};
  timed(stage, cached, [&] {
    if (cached) {
      const NamedMatrices entries = load_checkpoint(path(artifact));
      Rng scratch(0);
      trained.params = StudentParams::init(enc, bits, scratch);
      import_params(trained.params, entries, "student.");
      trained.final_loss = find_matrix(entries, "final_loss")(0, 0);
      return;
    }
    StudentTrainConfig train_cfg;
    train_cfg.bits = bits;
    train_cfg.epochs = config_.student_epochs;
    train_cfg.batch_size = config_.batch_size;
    train_cfg.pairs_per_batch = config_.pairs_per_batch;
    // Variants at one code length share the seed so they differ only in
    // the objective.
    train_cfg.seed = derive_seed(config_.seed, "student:" + std::to_string(bits));
    train_cfg.weights = variant.weights;
    train_cfg.input = variant.input;
    StudentTrainResult result = train_student(train.videos, enc, &g, a, train_cfg);

    Matrix log(result.log.size(), 4);
    for (std::size_t e = 0; e < result.log.size(); ++e) {
      const StudentLoss& l = result.log[e].loss;
      log(e, 0) = l.recon;
      log(e, 1) = l.bsim;
      log(e, 2) = l.tsim;
      log(e, 3) = l.total;
    }
    trained.final_loss = result.log.empty() ? 0.0 : result.log.back().loss.total;
    NamedMatrices entries = export_params(result.params, "student.");
    entries.push_back({"loss_log", std::move(log)});
    entries.push_back({"final_loss", Matrix(1, 1, trained.final_loss)});
    save_checkpoint(path(artifact), entries);
    write_stamp(stage, key);
    trained.params = std::move(result.params);
  });
  return students_.emplace(stage, std::move(trained)).first->second.params;
}

const StudentParams& Pipeline::student(std::size_t bits) {
  return train_variant({"", config_.weights, DecoderInput::kDualStream}, bits);
}

void Pipeline::encode(std::size_t bits) {
  const StudentParams& p = student(bits);
  const std::string student_stage = "student_K" + std::to_string(bits);
  const std::string stage = "encode_K" + std::to_string(bits);
  const std::string key = stage_key(students_.at(student_stage).key, "encode");
  const std::string q = "query_K" + std::to_string(bits) + ".codes";
  const std::string db = "database_K" + std::to_string(bits) + ".codes";
  const bool cached = stamp_matches(stage, key, {q, db});
  if (!cached) {
    split("query");
    split("database");
  }
  timed(stage, cached, [&] {
    if (cached) return;
    save_codes(path(q), encode_videos(split("query").videos, p));
    save_codes(path(db), encode_videos(split("database").videos, p));
    write_stamp(stage, key);
  });
}

BitsResult Pipeline::evaluate(std::size_t bits) {
  encode(bits);
  const VideoSet& query = split("query");
  const VideoSet& database = split("database");
  BitsResult out;
  out.bits = bits;
  out.final_loss = students_.at("student_K" + std::to_string(bits)).final_loss;
  timed("eval_K" + std::to_string(bits), false, [&] {
    const std::vector<BinaryCode> db_codes = load_codes(path("database_K" + std::to_string(bits) + ".codes"));
    const CodeIndex index(db_codes, database.labels);
    const QuerySet queries = make_queries(load_codes(path("query_K" + std::to_string(bits) + ".codes")),
                                          query, database.size());
    for (std::size_t k : config_.map_k) out.map.push_back({k, map_at_k(queries, index, k)});
    out.pr = pr_curve(queries, index);
  });
  return out;
}

PipelineReport Pipeline::run() {
  PipelineReport report;
  report.config_hash = config_.hash();
  report.reconstruction_only = config_.weights.gamma1 == 0.0 && config_.weights.gamma2 == 0.0;
  for (std::size_t bits : config_.code_bits) report.results.push_back(evaluate(bits));

  const SignedGraph& g = graph();
  Json stages = Json::object();
  stages["teacher"] = *teacher_key_;
  stages["graph"] = *graph_key_;
  for (const auto& [name, s] : students_) stages[name] = s.key;

  Json results = Json::array();
  for (const BitsResult& r : report.results) {
    Json pr = Json::array();
    for (const PrPoint& point : r.pr) {
      pr.push_back({{"radius", point.radius},
                    {"recall", point.recall},
                    {"precision", point.precision ? Json(*point.precision) : Json(nullptr)}});
    }
    results.push_back(
        {{"bits", r.bits}, {"final_loss", r.final_loss}, {"map", map_json(r.map)}, {"pr", pr}});
  }

  Json json;
  json["config_hash"] = report.config_hash;
  json["label"] = report.reconstruction_only ? "reconstruction-only baseline (DKPH-TS analog)" : "DKPH";
  json["reconstruction_only"] = report.reconstruction_only;
  json["data_key"] = data_key();
  json["splits"] = {{"train", split("train").size()},
                    {"query", split("query").size()},
                    {"database", split("database").size()}};
  json["stages"] = stages;
  json["teacher"] = {{"initial_loss", teacher_losses_.front()}, {"final_loss", teacher_losses_.back()}};
  json["graph"] = {{"centers", graph_header_.centers},
                   {"nearest_centers", graph_header_.nearest},
                   {"bandwidth", graph_header_.bandwidth},
                   {"positive_edges", g.positive_count()},
                   {"negative_edges", g.negative_count()},
                   {"isolated", static_cast<std::size_t>(
                                    std::count(g.isolated.begin(), g.isolated.end(), true))}};
  json["results"] = results;
  report.json = json.dump(2) + "\n";
  report.timings = timings_;
  write_text(path("report.json"), report.json);
  write_text(path("report.timing.json"), timings_json(report.config_hash, timings_).dump(2) + "\n");
  return report;
}

AblationReport Pipeline::ablate() {
  const std::size_t bits = config_.ablation_bits;
  const LossWeights w = config_.weights;
  LossWeights no_bsim = w;
  no_bsim.gamma1 = 0.0;
  LossWeights no_tsim = w;
  no_tsim.gamma2 = 0.0;
  LossWeights recon_only = w;
  recon_only.gamma1 = 0.0;
  recon_only.gamma2 = 0.0;
  const std::vector<std::pair<std::string, StudentVariant>> variants = {
      {"full", {"", w, DecoderInput::kDualStream}},
      {"no_dual_stream", {"no_dual_stream", w, DecoderInput::kCodeOnly}},
      {"no_bsim", {"no_bsim", no_bsim, DecoderInput::kDualStream}},
      {"no_tsim", {"no_tsim", no_tsim, DecoderInput::kDualStream}},
      {"recon_only", {"recon_only", recon_only, DecoderInput::kDualStream}},
  };

  AblationReport report;
  report.config_hash = config_.hash();
  report.bits = bits;
  const VideoSet& query = split("query");
  const VideoSet& database = split("database");
  for (const auto& [name, variant] : variants) {
    const StudentParams& p = train_variant(variant, bits);
    AblationVariant v{name, {}};
    timed("eval_" + name, false, [&] {
      const std::vector<BinaryCode> db_codes = encode_videos(database.videos, p);
      const CodeIndex index(db_codes, database.labels);
      const QuerySet queries = make_queries(encode_videos(query.videos, p), query, database.size());
      for (std::size_t k : config_.map_k) v.map.push_back({k, map_at_k(queries, index, k)});
    });
    report.variants.push_back(std::move(v));
  }

  const StudentParams& full = train_variant(variants.front().second, bits);
  timed("recon-decomposition", false, [&] {
    report.recon.intact = reconstruction_error(database.videos, full, DecoderInput::kDualStream);
    report.recon.remove_b = reconstruction_error(database.videos, full, DecoderInput::kLatentOnly);
    report.recon.remove_l = reconstruction_error(database.videos, full, DecoderInput::kCodeOnly);
    report.recon.l_mean = reconstruction_error(database.videos, full, DecoderInput::kLatentMean);
  });

  const AblationVariant& base = report.variants.front();
  Json variants_json = Json::array();
  for (const AblationVariant& v : report.variants) {
    Json delta = Json::object();
    for (std::size_t i = 0; i < v.map.size(); ++i) {
      delta[std::to_string(v.map[i].k)] = v.map[i].result.map - base.map[i].result.map;
    }
    variants_json.push_back({{"name", v.name}, {"map", map_json(v.map)}, {"delta_vs_full", delta}});
  }
  const ReconDecomposition& r = report.recon;
  const auto rel = [&](double e) { return r.intact > 0.0 ? (e - r.intact) / r.intact : 0.0; };
  Json json;
  json["config_hash"] = report.config_hash;
  json["bits"] = bits;
  json["variants"] = variants_json;
  json["reconstruction"] = {{"split", "database"},
                            {"intact", r.intact},
                            {"remove_b", r.remove_b},
                            {"remove_l", r.remove_l},
                            {"l_mean", r.l_mean},
                            {"remove_b_increase", rel(r.remove_b)},
                            {"remove_l_increase", rel(r.remove_l)},
                            {"l_mean_increase", rel(r.l_mean)}};
  report.json = json.dump(2) + "\n";
  report.timings = timings_;
  write_text(path("ablation.json"), report.json);
  write_text(path("ablation.timing.json"), timings_json(report.config_hash, timings_).dump(2) + "\n");
  return report;
}

PipelineReport run_pipeline(const RunConfig& config) { return Pipeline(config).run(); }

AblationReport ablation_suite(const RunConfig& config) { return Pipeline(config).ablate(); }

}  // namespace dkph

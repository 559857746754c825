#include "dkph/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string_view>

#include "dkph/errors.hpp"

namespace dkph {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string format_list(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

// One entry per key, in canonical order. `hashed` excludes the path keys so
// moving a run directory does not change its fingerprint.
struct Field {
  const char* key;
  bool hashed;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T, class M>
Field number_field(const char* key, M member) {
  return Field{key, true,
               [member](const RunConfig& c) {
                 if constexpr (std::is_floating_point_v<T>) {
                   return format_double(c.*member);
                 } else {
                   return std::to_string(c.*member);
                 }
               },
               [key, member](RunConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); }};
}

template <class M>
Field weight_field(const char* key, M member) {
  return Field{key, true, [member](const RunConfig& c) { return format_double(c.weights.*member); },
               [key, member](RunConfig& c, const std::string& v) {
                 c.weights.*member = parse_number<double>(key, v);
               }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      {"data_dir", false, [](const RunConfig& c) { return c.data_dir.string(); },
       [](RunConfig& c, const std::string& v) { c.data_dir = v; }},
      {"work_dir", false, [](const RunConfig& c) { return c.work_dir.string(); },
       [](RunConfig& c, const std::string& v) { c.work_dir = v; }},
      number_field<std::uint64_t>("seed", &RunConfig::seed),
      number_field<std::size_t>("model_dim", &RunConfig::model_dim),
      number_field<std::size_t>("ffn_dim", &RunConfig::ffn_dim),
      number_field<std::size_t>("teacher_epochs", &RunConfig::teacher_epochs),
      number_field<std::size_t>("student_epochs", &RunConfig::student_epochs),
      number_field<std::size_t>("batch_size", &RunConfig::batch_size),
      number_field<std::size_t>("pairs_per_batch", &RunConfig::pairs_per_batch),
      {"code_bits", true, [](const RunConfig& c) { return format_list(c.code_bits); },
       [](RunConfig& c, const std::string& v) { c.code_bits = parse_list("code_bits", v); }},
      number_field<std::size_t>("num_centers", &RunConfig::num_centers),
      number_field<std::size_t>("nearest_centers", &RunConfig::nearest_centers),
      number_field<std::size_t>("kmeans_iters", &RunConfig::kmeans_iters),
      weight_field("learning_rate", &LossWeights::learning_rate),
      weight_field("mask_ratio", &LossWeights::mask_ratio),
      weight_field("bandwidth", &LossWeights::bandwidth),
      weight_field("lambda1", &LossWeights::lambda1),
      weight_field("lambda2", &LossWeights::lambda2),
      weight_field("eta", &LossWeights::eta),
      weight_field("beta", &LossWeights::beta),
      weight_field("gamma1", &LossWeights::gamma1),
      weight_field("gamma2", &LossWeights::gamma2),
      {"map_k", true, [](const RunConfig& c) { return format_list(c.map_k); },
       [](RunConfig& c, const std::string& v) { c.map_k = parse_list("map_k", v); }},
      number_field<std::size_t>("ablation_bits", &RunConfig::ablation_bits),
  };
  return all;
}

}  // namespace

void RunConfig::validate() const {
  if (model_dim == 0 || ffn_dim == 0) throw ConfigError("model_dim and ffn_dim must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (code_bits.empty()) throw ConfigError("code_bits must list at least one length");
  for (std::size_t k : code_bits) {
    if (k == 0) throw ConfigError("code_bits entries must be positive");
  }
  if (num_centers == 0) throw ConfigError("num_centers must be positive");
  if (nearest_centers == 0 || nearest_centers > num_centers) {
    throw ConfigError("nearest_centers must lie in [1, num_centers]");
  }
  if (weights.mask_ratio > 1.0) throw ConfigError("mask_ratio must lie in [0, 1]");
  try {
    weights.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  for (std::size_t k : map_k) {
    if (k == 0) throw ConfigError("map_k entries must be positive");
  }
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::string canonical;
  for (const Field& f : fields()) {
    if (f.hashed) canonical += std::string(f.key) + "=" + f.get(*this) + "\n";
  }
  return fnv1a_hex(canonical);
}

RunConfig parse_config(std::istream& is) {
  RunConfig config;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const Field* field = nullptr;
    for (const Field& f : fields()) {
      if (key == f.key) field = &f;
    }
    if (field == nullptr) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.emplace(key, line_no).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key + "' repeated");
    }
    field->set(config, value);
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  return parse_config(is);
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << config.to_text();
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state) {
  for (unsigned char c : bytes) {
    state ^= c;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(bytes);
  return os.str();
}

}  // namespace dkph

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "s2df/error.hpp"
#include "s2df/trainer.hpp"

namespace s2df {

/// Every setting of a command-line run. All fields round-trip through flat
/// `key = value` text, which is also what the run manifest stores.
struct RunConfig {
  std::string command;
  int dim = 3;
  std::string input;
  std::string out_dir = ".";
  int threads = 0;
  std::size_t log_every = 100;

  TrainConfig train;
  std::string terms = "all";  // subset of dirichlet,neumann,ma,nonmanifold

  std::string checkpoint;  // empty: <out_dir>/final.s2df
  int res = 0;             // 0: 512 in 2D, 256 in 3D
  double iso = 5e-3;
  double bound = 1.03;
  std::string mesh_format = "ply";
  bool write_grid = false;

  std::string recon;  // empty: <out_dir>/contour.csv (2D) or <out_dir>/mesh.<mesh_format> (3D)
  std::string gt;
  std::string gt_primitive;
  std::string transform;  // transform sidecar applied to file-based ground truth
  std::string shape;      // label in the metrics row
  std::size_t samples = 100000;
  double tau = 0.008;
  std::uint64_t eval_seed = 0;

  std::string primitive = "sphere";
  std::size_t n = 1000;

  std::string ablation = "k";  // k | loss | regularizer
  std::string k_values = "1,10,100,1000,10000";

  int resolved_res() const { return res > 0 ? res : (dim == 2 ? 512 : 256); }
  // Empty paths default into out_dir and stay empty in manifests, so a
  // manifest replayed with a new out_dir reads that directory's files.
  std::string resolved_checkpoint() const { return checkpoint.empty() ? out_dir + "/final.s2df" : checkpoint; }
  std::string resolved_recon() const {
    if (!recon.empty()) return recon;
    return out_dir + (dim == 2 ? "/contour.csv" : "/mesh." + mesh_format);
  }

  /// Training settings with the thread count, determinism and term mask applied.
  TrainConfig resolved_train() const;

  void validate() const {
    if (dim != 2 && dim != 3) throw PreconditionError("dim must be 2 or 3");
    if (!(iso > 0)) throw PreconditionError("iso must be positive");
    if (!(bound > 0)) throw PreconditionError("bound must be positive");
    if (res != 0 && res < 2) throw PreconditionError("res must be >= 2");
    if (!(tau > 0)) throw PreconditionError("tau must be positive");
    if (mesh_format != "ply" && mesh_format != "obj") throw PreconditionError("mesh_format must be ply or obj");
    resolved_train().validate();
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end) throw ParseError("invalid value for " + key + ": '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParseError("invalid boolean for " + key + ": '" + v + "'");
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  for (const auto& item : split(v, ',')) out.push_back(parse_number<T>(key, item));
  return out;
}

struct ConfigField {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
  bool is_bool = false;
};

#define S2DF_NUM_FIELD(name, member)                                                            \
  ConfigField {                                                                                 \
    name, [](const RunConfig& c) { return num_str(c.member); },                                 \
        [](RunConfig& c, const std::string& v) {                                                \
          c.member = parse_number<std::decay_t<decltype(c.member)>>(name, v);                   \
        }                                                                                       \
  }
#define S2DF_STR_FIELD(name, member) \
  ConfigField { name, [](const RunConfig& c) { return c.member; }, [](RunConfig& c, const std::string& v) { c.member = v; } }
#define S2DF_BOOL_FIELD(name, member)                                                                 \
  ConfigField {                                                                                       \
    name, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); },                \
        [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, true              \
  }

template <typename T>
std::string num_str(T v) {
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(v);
  } else {
    return std::to_string(v);
  }
}

/// Fields in application order: a weight preset comes before the individual
/// weights so explicit weights override it.
inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      S2DF_STR_FIELD("command", command),
      S2DF_NUM_FIELD("dim", dim),
      S2DF_STR_FIELD("input", input),
      S2DF_STR_FIELD("out", out_dir),
      S2DF_NUM_FIELD("threads", threads),
      S2DF_NUM_FIELD("log_every", log_every),
      S2DF_NUM_FIELD("iters", train.iterations),
      S2DF_NUM_FIELD("lr", train.lr0),
      S2DF_NUM_FIELD("decay_factor", train.decay_factor),
      ConfigField{"decay_iters", [](const RunConfig& c) { return join(c.train.decay_iters); },
                  [](RunConfig& c, const std::string& v) { c.train.decay_iters = parse_list<std::size_t>("decay_iters", v); }},
      S2DF_NUM_FIELD("K", train.K),
      S2DF_NUM_FIELD("alpha", train.alpha),
      ConfigField{"weights", [](const RunConfig& c) { return c.train.weight_preset; },
                  [](RunConfig& c, const std::string& v) { c.train.use_preset(v); }},
      S2DF_NUM_FIELD("w_dirichlet", train.weights.dirichlet),
      S2DF_NUM_FIELD("w_neumann", train.weights.neumann),
      S2DF_NUM_FIELD("w_ma", train.weights.ma),
      S2DF_NUM_FIELD("w_nonmanifold", train.weights.nonmanifold),
      S2DF_STR_FIELD("terms", terms),
      ConfigField{"loss", [](const RunConfig& c) { return std::string(to_string(c.train.regularizer)); },
                  [](RunConfig& c, const std::string& v) { c.train.regularizer = parse_regularizer(v); }},
      S2DF_BOOL_FIELD("ma_dim_scaling", train.ma_dimension_scaling),
      S2DF_NUM_FIELD("batch", train.sampler.batch_size),
      S2DF_NUM_FIELD("sigma", train.sampler.sigma),
      S2DF_NUM_FIELD("uniform_fraction", train.sampler.uniform_fraction),
      S2DF_NUM_FIELD("uniform_extent", train.sampler.uniform_extent),
      ConfigField{"seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
                  [](RunConfig& c, const std::string& v) { c.train.set_seed(parse_number<std::uint64_t>("seed", v)); }},
      S2DF_NUM_FIELD("sampler_seed", train.sampler.seed),
      ConfigField{"hidden", [](const RunConfig& c) { return join(c.train.hidden); },
                  [](RunConfig& c, const std::string& v) { c.train.hidden = parse_list<int>("hidden", v); }},
      S2DF_NUM_FIELD("omega0", train.omega0),
      S2DF_NUM_FIELD("hidden_omega", train.hidden_omega),
      ConfigField{"bias_init",
                  [](const RunConfig& c) {
                    return std::string(c.train.bias_init == BiasInit::kZero ? "zero" : "uniform");
                  },
                  [](RunConfig& c, const std::string& v) {
                    if (v == "zero") c.train.bias_init = BiasInit::kZero;
                    else if (v == "uniform") c.train.bias_init = BiasInit::kUniformFanIn;
                    else throw ParseError("invalid value for bias_init: '" + v + "' (zero | uniform)");
                  }},
      S2DF_BOOL_FIELD("normalize", train.normalize),
      S2DF_BOOL_FIELD("deterministic", train.deterministic),
      S2DF_NUM_FIELD("checkpoint_interval", train.checkpoint_interval),
      S2DF_STR_FIELD("checkpoint", checkpoint),
      S2DF_NUM_FIELD("res", res),
      S2DF_NUM_FIELD("iso", iso),
      S2DF_NUM_FIELD("bound", bound),
      S2DF_STR_FIELD("mesh_format", mesh_format),
      S2DF_BOOL_FIELD("write_grid", write_grid),
      S2DF_STR_FIELD("recon", recon),
      S2DF_STR_FIELD("gt", gt),
      S2DF_STR_FIELD("gt_primitive", gt_primitive),
      S2DF_STR_FIELD("transform", transform),
      S2DF_STR_FIELD("shape", shape),
      S2DF_NUM_FIELD("samples", samples),
      S2DF_NUM_FIELD("tau", tau),
      S2DF_NUM_FIELD("eval_seed", eval_seed),
      S2DF_STR_FIELD("primitive", primitive),
      S2DF_NUM_FIELD("n", n),
      S2DF_STR_FIELD("ablation", ablation),
      S2DF_STR_FIELD("k_values", k_values),
  };
  return fields;
}

#undef S2DF_NUM_FIELD
#undef S2DF_STR_FIELD
#undef S2DF_BOOL_FIELD

}  // namespace detail

inline TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.exec.threads = threads;
  if (terms != "all") {
    LossWeights w{0, 0, 0, 0};
    for (const auto& term : detail::split(terms, ',')) {
      if (term == "dirichlet") w.dirichlet = t.weights.dirichlet;
      else if (term == "neumann") w.neumann = t.weights.neumann;
      else if (term == "ma") w.ma = t.weights.ma;
      else if (term == "nonmanifold") w.nonmanifold = t.weights.nonmanifold;
      else throw ParseError("unknown loss term in terms: '" + term + "'");
    }
    t.weights = w;
  }
  return t;
}

using ConfigMap = std::map<std::string, std::string>;

/// Applies settings in the fixed field order; unknown keys are errors.
inline void apply_config(RunConfig& cfg, const ConfigMap& values) {
  for (const auto& [k, v] : values) {
    bool known = false;
    for (const auto& f : detail::config_fields()) known = known || f.key == k;
    if (!known) throw ParseError("unknown config key: " + k);
  }
  for (const auto& f : detail::config_fields()) {
    auto it = values.find(f.key);
    if (it != values.end()) f.set(cfg, it->second);
  }
  // Shortened runs keep the schedule's shape unless milestones are given.
  if (values.count("iters") && !values.count("decay_iters"))
    cfg.train.decay_iters = scaled_decay_iters(cfg.train.iterations);
}

/// Fully resolved settings, in field order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : detail::config_fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

inline bool is_bool_key(const std::string& key) {
  for (const auto& f : detail::config_fields())
    if (f.key == key) return f.is_bool;
  return false;
}

/// `key = value` lines; '#' starts a comment. Later lines win.
inline ConfigMap parse_config_text(std::istream& is, const std::string& name = "<config>") {
  ConfigMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(name + ":" + std::to_string(lineno) + ": expected key = value");
    const auto key = detail::trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ParseError(name + ":" + std::to_string(lineno) + ": empty key");
    out[key] = detail::trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

inline ConfigMap read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open config file: " + path);
  return parse_config_text(is, path);
}

inline void write_config_text(std::ostream& os, const RunConfig& cfg) {
  for (const auto& [k, v] : config_entries(cfg)) os << k << " = " << v << '\n';
}

// ---------------------------------------------------------------------------
// Run manifest (run.json).

inline constexpr int kManifestVersion = 1;

struct Manifest {
  RunConfig config;
  std::vector<std::string> outputs;  // file names relative to the output directory
  double wall_seconds = -1;          // omitted under the determinism flag
};

inline nlohmann::ordered_json manifest_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "s2df-run";
  j["version"] = kManifestVersion;
  j["command"] = m.config.command;
  j["seed"] = m.config.train.seed;
  nlohmann::ordered_json c = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_entries(m.config)) c[k] = v;
  j["config"] = c;
  j["outputs"] = m.outputs;
  if (!m.config.train.deterministic && m.wall_seconds >= 0) j["wall_seconds"] = m.wall_seconds;
  return j;
}

inline void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write manifest: " + path);
  os << manifest_json(m).dump(2) << '\n';
  if (!os) throw Error("failed writing manifest: " + path);
}

/// Settings stored in a manifest, as a map that flags can override.
inline ConfigMap read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest " + path + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "s2df-run" || !j.contains("config") || !j["config"].is_object())
    throw ParseError("not an s2df run manifest: " + path);
  if (j.value("version", 0) != kManifestVersion) throw ParseError("unsupported manifest version in " + path);
  ConfigMap out;
  for (const auto& [k, v] : j["config"].items()) {
    if (!v.is_string()) throw ParseError("manifest value for " + k + " must be a string");
    out[k] = v.get<std::string>();
  }
  return out;
}

}  // namespace s2df

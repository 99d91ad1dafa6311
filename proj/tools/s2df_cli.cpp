#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "s2df/pipeline.hpp"

namespace {

using s2df::ConfigMap;
using s2df::RunConfig;

const std::vector<std::string> kCommonKeys = {"out", "threads", "deterministic", "log_every"};
const std::vector<std::string> kTrainKeys = {
    "dim",   "input",        "iters",      "lr",        "decay_factor", "decay_iters",   "K",       "alpha",
    "weights", "w_dirichlet", "w_neumann", "w_ma",      "w_nonmanifold", "terms",        "loss",    "ma_dim_scaling",
    "batch", "sigma",        "uniform_fraction", "uniform_extent", "seed",       "sampler_seed", "hidden",    "omega0",        "hidden_omega", "bias_init",
    "normalize", "checkpoint_interval"};
const std::vector<std::string> kExtractKeys = {"checkpoint", "res", "iso", "bound", "mesh_format", "write_grid", "K"};
const std::vector<std::string> kEvalKeys = {"dim",   "recon", "gt",        "gt_primitive", "transform",
                                            "shape", "samples", "tau", "eval_seed",    "K"};
const std::vector<std::string> kVerifyKeys = {"primitive", "K", "n", "seed", "dim"};
const std::vector<std::string> kAblateKeys = {"ablation", "k_values"};

const std::map<std::string, std::string> kHelp = {
    {"out", "output directory"},
    {"threads", "worker threads (0: hardware concurrency)"},
    {"deterministic", "omit wall-clock fields so reruns are bit-identical"},
    {"log_every", "training log interval in iterations (0: off)"},
    {"dim", "2 or 3"},
    {"input", "point cloud (.xyz, .ply, .obj)"},
    {"iters", "training iterations (milestones rescale unless decay-iters is given)"},
    {"lr", "initial Adam learning rate"},
    {"decay_factor", "learning-rate factor at each milestone"},
    {"decay_iters", "comma-separated decay milestones"},
    {"K", "S2DF scale: t = K g^2"},
    {"alpha", "non-manifold penalty sharpness"},
    {"weights", "weight preset: open | watertight"},
    {"w_dirichlet", "Dirichlet weight"},
    {"w_neumann", "Neumann weight"},
    {"w_ma", "Monge-Ampere (or eikonal-prime) weight"},
    {"w_nonmanifold", "non-manifold weight"},
    {"terms", "all, or a comma list of dirichlet,neumann,ma,nonmanifold"},
    {"loss", "regularizer: ma | eikonal_prime"},
    {"ma_dim_scaling", "scale the regularizer weight by (2K)^(3-dim)"},
    {"batch", "surface points per iteration (same number off-surface)"},
    {"sigma", "off-surface Gaussian standard deviation"},
    {"uniform_fraction", "share of off-surface points drawn uniformly instead of as Gaussian offsets"},
    {"uniform_extent", "half-width of the cube for uniform off-surface points"},
    {"seed", "network and sampler seed"},
    {"sampler_seed", "sampler seed only"},
    {"hidden", "comma-separated hidden widths"},
    {"omega0", "first-layer frequency"},
    {"hidden_omega", "hidden-layer frequency"},
    {"bias_init", "zero | uniform"},
    {"normalize", "center and scale the input into the unit ball"},
    {"checkpoint_interval", "iterations between last.s2df snapshots"},
    {"checkpoint", "checkpoint to extract (default <out>/final.s2df)"},
    {"res", "grid resolution per axis (0: 512 in 2D, 256 in 3D)"},
    {"iso", "UDF iso-value"},
    {"bound", "grid half-extent"},
    {"mesh_format", "ply | obj"},
    {"write_grid", "also write grid.csv with UDF samples"},
    {"recon", "reconstruction to score (default from <out>)"},
    {"gt", "ground-truth surface file"},
    {"gt_primitive", "analytic ground truth, e.g. sphere:0.7 or circle"},
    {"transform", "transform.json mapping file ground truth into normalized space"},
    {"shape", "label written to metrics.csv"},
    {"samples", "surface samples per side"},
    {"tau", "F-score threshold"},
    {"eval_seed", "sampling seed for evaluation"},
    {"primitive", "sphere, plane, circle, segment, arc, line, or all"},
    {"n", "random points per primitive"},
    {"ablation", "k | loss | regularizer"},
    {"k_values", "comma-separated K values for the K ablation"},
};

/// Flags given on the command line, keyed like the config file.
struct Subcommand {
  CLI::App* app = nullptr;
  std::string config_file;
  std::string manifest;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> bools;
  std::map<std::string, CLI::Option*> options;
};

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (auto& c : s)
    if (c == '_') c = '-';
  return s;
}

void add_keys(Subcommand& sub, const std::vector<std::string>& keys) {
  for (const auto& key : keys) {
    if (sub.options.count(key)) continue;
    const auto name = flag_name(key);
    const auto it = kHelp.find(key);
    const std::string help = it == kHelp.end() ? std::string() : it->second;
    if (s2df::is_bool_key(key)) {
      sub.bools[key] = false;
      sub.options[key] = sub.app->add_flag("--" + name + ",!--no-" + name, sub.bools[key], help);
    } else {
      std::string names = "--" + name;
      if (key == "out") names += ",-o";
      if (key == "input") names += ",-i";
      sub.options[key] = sub.app->add_option(names, sub.values[key], help);
    }
  }
}

ConfigMap resolve(const Subcommand& sub, const std::string& command) {
  ConfigMap map;
  if (!sub.manifest.empty()) map = s2df::read_manifest(sub.manifest);
  if (!sub.config_file.empty())
    for (const auto& [k, v] : s2df::read_config_file(sub.config_file)) map[k] = v;
  for (const auto& [key, opt] : sub.options) {
    if (opt->count() == 0) continue;
    map[key] = s2df::is_bool_key(key) ? (sub.bools.at(key) ? "true" : "false") : sub.values.at(key);
  }
  if (!command.empty()) map["command"] = command;
  return map;
}

int dispatch(const RunConfig& cfg) {
  auto& log = std::cerr;
  const std::string& c = cfg.command;
  if (c == "train") return cfg.dim == 2 ? s2df::run_train<2>(cfg, log) : s2df::run_train<3>(cfg, log);
  if (c == "extract") return s2df::run_extract(cfg, log);
  if (c == "eval") return cfg.dim == 2 ? s2df::run_eval<2>(cfg, log) : s2df::run_eval<3>(cfg, log);
  if (c == "verify") return s2df::run_verify(cfg, log);
  if (c == "ablate") return cfg.dim == 2 ? s2df::run_ablate<2>(cfg, log) : s2df::run_ablate<3>(cfg, log);
  throw s2df::ParseError("unknown command '" + c + "'");
}

int run(int argc, char** argv) {
  CLI::App app{"Squared-distance field learning, extraction and evaluation"};
  app.require_subcommand(1);

  std::map<std::string, Subcommand> subs;
  auto make = [&](const std::string& name, const std::string& help, std::vector<std::vector<std::string>> groups) {
    auto& s = subs[name];
    s.app = app.add_subcommand(name, help);
    s.app->add_option("--config", s.config_file, "key = value settings file (flags win)");
    s.app->add_option("--manifest", s.manifest, "run.json to start from (config file and flags win)");
    add_keys(s, kCommonKeys);
    for (const auto& g : groups) add_keys(s, g);
  };
  make("train", "Train a field on a point cloud", {kTrainKeys});
  make("extract", "Extract the offset iso-contour or iso-surface of a checkpoint", {kExtractKeys});
  make("eval", "Score a reconstruction against ground truth", {kEvalKeys});
  make("verify", "Run the analytic identity suite on a primitive", {kVerifyKeys});
  make("ablate", "Run a K, loss-term or regularizer ablation matrix",
       {kTrainKeys, kExtractKeys, kEvalKeys, kAblateKeys});

  std::string replay_path;
  Subcommand replay;
  replay.app = app.add_subcommand("replay", "Re-run the command recorded in a run.json manifest");
  replay.app->add_option("manifest", replay_path, "run.json")->required();
  add_keys(replay, {"out", "threads", "log_every"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? s2df::kExitOk : s2df::kExitInput;
  }

  ConfigMap map;
  if (replay.app->parsed()) {
    replay.manifest = replay_path;
    map = resolve(replay, "");
  } else {
    for (auto& [name, sub] : subs)
      if (sub.app->parsed()) map = resolve(sub, name);
  }
  RunConfig cfg;
  s2df::apply_config(cfg, map);
  return dispatch(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const s2df::NumericalFailure& e) {
    std::cerr << "numerical failure (" << e.term() << "): " << e.what() << '\n';
    return s2df::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return s2df::kExitInput;
  }
}

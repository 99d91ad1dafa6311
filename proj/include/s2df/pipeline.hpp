#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2df/error.hpp"
#include "s2df/extraction.hpp"
#include "s2df/geometry.hpp"
#include "s2df/io.hpp"
#include "s2df/metrics.hpp"
#include "s2df/oracles.hpp"
#include "s2df/run_config.hpp"
#include "s2df/trainer.hpp"

namespace s2df {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitViolation = 1,  // verify found an identity violation
  kExitInput = 2,      // unreadable, malformed or missing input
  kExitNumerical = 3,  // training diverged
  kExitEmpty = 4,      // extraction produced nothing
};

/// Manifest file written by a command: `<command>.run.json`, so that stages
/// sharing an output directory keep their own manifests.
inline std::string manifest_name(const std::string& command) {
  return (command.empty() ? std::string("run") : command) + ".run.json";
}

// ---------------------------------------------------------------------------
// Normalization transform sidecar.

template <int D>
void write_transform_json(const std::string& path, const NormTransform<D>& t, double K) {
  nlohmann::ordered_json j;
  j["dim"] = D;
  j["center"] = std::vector<double>(t.center.data(), t.center.data() + D);
  j["scale"] = t.scale;
  j["K"] = K;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  os << std::setprecision(17) << j.dump(2) << '\n';
}

template <int D>
NormTransform<D> read_transform_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open transform sidecar: " + path);
  NormTransform<D> t;
  try {
    const auto j = nlohmann::json::parse(is);
    if (j.at("dim").get<int>() != D) throw ParseError("transform sidecar dimension mismatch: " + path);
    const auto c = j.at("center").get<std::vector<double>>();
    if (c.size() != static_cast<std::size_t>(D)) throw ParseError("transform sidecar center has wrong length: " + path);
    for (int i = 0; i < D; ++i) t.center[i] = c[i];
    t.scale = j.at("scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed transform sidecar " + path + ": " + e.what());
  }
  if (!(t.scale > 0) || !t.center.allFinite()) throw ParseError("invalid transform sidecar: " + path);
  return t;
}

// ---------------------------------------------------------------------------
// Surface samples for evaluation.

namespace detail {

inline std::string extension(const std::string& path) {
  auto e = std::filesystem::path(path).extension().string();
  if (!e.empty()) e.erase(0, 1);
  return e;
}

inline double parse_spec_number(const std::string& spec, const std::string& v) {
  return parse_number<double>("primitive spec '" + spec + "'", v);
}

}  // namespace detail

/// Primitive from `name[:args]`: sphere[:r], plane, segment (D-dim);
/// circle[:r], arc[:r:start:end], line (2D only). Defaults: r = 0.5,
/// arc over [0, pi], plane/line through the origin with normal e_last,
/// segment from -0.5 e_0 to 0.5 e_0.
template <int D>
oracles::Primitive<D> parse_primitive(const std::string& spec, double K) {
  const auto parts = detail::split(spec, ':');
  if (parts.empty()) throw ParseError("empty primitive spec");
  const std::string& name = parts[0];
  auto arg = [&](std::size_t i, double def) {
    return i < parts.size() ? detail::parse_spec_number(spec, parts[i]) : def;
  };
  oracles::Primitive<D> p;
  p.K = K;
  if (name == "sphere" || (name == "circle" && D == 2)) {
    oracles::Sphere<D> s;
    s.radius = arg(1, 0.5);
    p.shape = s;
  } else if (name == "plane" || (name == "line" && D == 2)) {
    oracles::Plane<D> s;
    s.normal = Point<D>::Unit(D - 1);
    p.shape = s;
  } else if (name == "segment") {
    oracles::Segment<D> s;
    s.a = -0.5 * Point<D>::Unit(0);
    s.b = 0.5 * Point<D>::Unit(0);
    p.shape = s;
  } else if (name == "arc" && D == 2) {
    if constexpr (D == 2) {
      oracles::Arc2 s;
      s.radius = arg(1, 0.5);
      s.start = arg(2, 0.0);
      s.end = arg(3, std::numbers::pi);
      p.shape = s;
    }
  } else {
    throw ParseError("unknown primitive '" + spec + "' for dimension " + std::to_string(D));
  }
  p.validate();
  return p;
}

/// Dimension implied by a primitive name, or `fallback` for sphere/plane/segment.
inline int primitive_dim(const std::string& spec, int fallback) {
  const auto name = spec.substr(0, spec.find(':'));
  return name == "circle" || name == "arc" || name == "line" ? 2 : fallback;
}

/// Uniform samples of a surface file: meshes (.obj, .ply with faces) are
/// area-sampled, 2D contours (.csv) length-sampled, point clouds used as is.
template <int D>
PointCloud<D> load_surface_samples(const std::string& path, std::size_t n, std::uint64_t seed) {
  const auto ext = detail::extension(path);
  if (ext == "csv") {
    if constexpr (D == 2) {
      std::ifstream is(path);
      if (!is) throw ParseError("cannot open " + path);
      const auto contour = read_contour_csv(is, path);
      if (contour.empty()) throw DegenerateInput("contour file is empty: " + path);
      return sample_contour(contour, n, seed);
    } else {
      throw ParseError("contour CSV files are 2D only: " + path);
    }
  }
  if constexpr (D == 3) {
    if (ext == "obj") {
      const auto mesh = io::read_mesh(path);
      if (mesh.empty()) throw DegenerateInput("mesh has no faces: " + path);
      return sample_mesh_surface(mesh, n, seed);
    }
    if (ext == "ply") {
      const auto ply = io::read_ply(path);
      if (!ply.faces.empty()) return sample_mesh_surface(io::ply_to_mesh(ply), n, seed);
      return io::ply_to_cloud(ply);
    }
  }
  return io::read_cloud<D>(path);
}

// ---------------------------------------------------------------------------
// Stages.

/// Trains on cfg.input and writes final.s2df, history.csv, transform.json and
/// train.run.json into cfg.out_dir.
template <int D>
int run_train(RunConfig cfg, std::ostream& log) {
  cfg.dim = D;
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(cfg.out_dir);
  const auto input = io::read_cloud<D>(cfg.input);
  if (input.empty()) throw DegenerateInput("input cloud is empty: " + cfg.input);

  TrainConfig tc = cfg.resolved_train();
  tc.checkpoint_dir = cfg.out_dir;
  auto out_path = [&](const std::string& f) { return (std::filesystem::path(cfg.out_dir) / f).string(); };
  Manifest manifest{cfg, {}, -1};
  auto finish = [&] {
    if (!cfg.train.deterministic)
      manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(out_path(manifest_name(cfg.command)), manifest);
  };
  auto write_history = [&](const TrainHistory& h) {
    std::ofstream os(out_path("history.csv"), std::ios::binary);
    write_history_csv(os, h);
    manifest.outputs.push_back("history.csv");
  };

  const auto callback = [&](const HistoryRecord& r, const SirenParams&) {
    if (cfg.log_every > 0 && (r.iter % cfg.log_every == 0 || r.iter + 1 == tc.iterations))
      log << "iter " << r.iter << " lr " << r.lr << " loss " << r.loss.total << " (ma " << r.loss.ma << ", dirichlet "
          << r.loss.dirichlet << ", neumann " << r.loss.neumann << ", nonmanifold " << r.loss.nonmanifold << ")\n";
    return true;
  };
  try {
    const auto result = train<D>(input, tc, callback);
    write_transform_json(out_path("transform.json"), result.transform, tc.K);
    manifest.outputs = {"final.s2df", "transform.json"};
    if (tc.checkpoint_interval > 0 && tc.iterations >= tc.checkpoint_interval) manifest.outputs.push_back("last.s2df");
    write_history(result.history);
    finish();
    return kExitOk;
  } catch (const TrainingAborted& e) {
    log << "training aborted: " << e.what() << " (term: " << e.term() << "); last good parameters in "
        << out_path("last_good.s2df") << '\n';
    manifest.outputs = {"last_good.s2df"};
    write_history(e.history);
    finish();
    return kExitNumerical;
  }
}

template <int D>
ScalarFieldGrid<D> udf_grid(const SirenParams& params, const RunConfig& cfg) {
  const auto grid = AxisGrid<D>::cube(-cfg.bound, cfg.bound, cfg.resolved_res());
  ExecOptions exec;
  exec.threads = cfg.threads;
  return s2df_to_udf(evaluate_grid<D>(params, grid, exec), cfg.train.K);
}

/// Extracts the iso-contour (2D, contour.csv) or iso-surface (3D,
/// mesh.ply/.obj) of the checkpoint's UDF in normalized coordinates.
inline int run_extract(RunConfig cfg, std::ostream& log) {
  const auto ckpt = cfg.resolved_checkpoint();
  const auto params = load_checkpoint(ckpt);
  cfg.dim = params.input_dim;
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  auto out_path = [&](const std::string& f) { return (std::filesystem::path(cfg.out_dir) / f).string(); };
  Manifest manifest{cfg, {}, -1};
  const auto start = std::chrono::steady_clock::now();
  bool empty = false;
  ExecOptions exec;
  exec.threads = cfg.threads;

  if (cfg.dim == 2) {
    const auto udf = udf_grid<2>(params, cfg);
    const auto contour = extract_iso_2d(udf, cfg.iso);
    empty = contour.empty();
    std::ofstream os(out_path("contour.csv"), std::ios::binary);
    write_contour_csv(os, contour);
    manifest.outputs.push_back("contour.csv");
    if (cfg.write_grid) {
      std::ofstream gs(out_path("grid.csv"), std::ios::binary);
      write_grid_csv(gs, udf);
      manifest.outputs.push_back("grid.csv");
    }
    log << "contour: " << contour.size() << " components, length " << contour_length(contour) << '\n';
  } else if (cfg.dim == 3) {
    const auto udf = udf_grid<3>(params, cfg);
    const auto mesh = extract_iso_3d(udf, cfg.iso, exec);
    empty = mesh.empty();
    const std::string name = "mesh." + cfg.mesh_format;
    io::write_mesh(out_path(name), mesh);
    manifest.outputs.push_back(name);
    if (cfg.write_grid) {
      std::ofstream gs(out_path("grid.csv"), std::ios::binary);
      write_grid_csv(gs, udf);
      manifest.outputs.push_back("grid.csv");
    }
    log << "mesh: " << mesh.vertices.size() << " vertices, " << mesh.faces.size() << " faces\n";
  } else {
    throw ParseError("checkpoint input dimension must be 2 or 3");
  }
  if (!cfg.train.deterministic)
    manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(out_path(manifest_name(cfg.command)), manifest);
  if (empty) {
    log << "warning: extraction at iso " << cfg.iso << " is empty\n";
    return kExitEmpty;
  }
  return kExitOk;
}

template <int D>
PointCloud<D> ground_truth_samples(const RunConfig& cfg) {
  if (!cfg.gt_primitive.empty()) {
    const auto prim = parse_primitive<D>(cfg.gt_primitive, cfg.train.K);
    return oracles::sample_primitive(prim, cfg.samples, cfg.eval_seed + 1);
  }
  if (cfg.gt.empty()) throw ParseError("eval needs gt or gt_primitive");
  auto gt = load_surface_samples<D>(cfg.gt, cfg.samples, cfg.eval_seed + 1);
  if (!cfg.transform.empty()) gt = apply_transform(gt, read_transform_json<D>(cfg.transform));
  return gt;
}

/// Scores cfg.recon against the ground truth and writes metrics.csv.
template <int D>
int run_eval(RunConfig cfg, std::ostream& log) {
  cfg.dim = D;
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  auto out_path = [&](const std::string& f) { return (std::filesystem::path(cfg.out_dir) / f).string(); };
  const auto start = std::chrono::steady_clock::now();
  const auto recon_path = cfg.resolved_recon();
  const auto recon = load_surface_samples<D>(recon_path, cfg.samples, cfg.eval_seed);
  if (recon.empty()) throw DegenerateInput("reconstruction has no samples: " + recon_path);
  const auto gt = ground_truth_samples<D>(cfg);
  const auto report = evaluate_metrics(recon, gt, cfg.tau, cfg.threads);
  {
    std::ofstream os(out_path("metrics.csv"), std::ios::binary);
    write_metric_header(os);
    const std::string shape =
        !cfg.shape.empty() ? cfg.shape : std::filesystem::path(recon_path).stem().string();
    write_metric_row(os, shape, report, cfg.samples, cfg.eval_seed);
  }
  log << "CD(x1e3) " << report.cd_l1_x1e3 << "  NC " << report.nc_percent << "  F-score@" << report.threshold << ' '
      << report.fscore_percent << '\n';
  Manifest manifest{cfg, {"metrics.csv"}, -1};
  if (!cfg.train.deterministic)
    manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(out_path(manifest_name(cfg.command)), manifest);
  return kExitOk;
}

/// Identity-suite rows for one primitive.
struct VerifyRow {
  std::string primitive;
  int dim = 0;
  oracles::IdentityReport report;
};

template <int D>
VerifyRow verify_primitive(const std::string& spec, double K, std::size_t n, std::uint64_t seed) {
  return {spec, D, oracles::run_identity_suite(parse_primitive<D>(spec, K), n, seed)};
}

inline std::vector<VerifyRow> verify_rows(const RunConfig& cfg) {
  std::vector<std::string> specs;
  if (cfg.primitive == "all") specs = {"sphere", "plane", "circle", "segment"};
  else specs = {cfg.primitive};
  std::vector<VerifyRow> rows;
  for (const auto& spec : specs) {
    // "all" runs segment in 2D and sphere/plane in 3D.
    const int dim = cfg.primitive == "all" ? (spec == "segment" ? 2 : primitive_dim(spec, 3)) : primitive_dim(spec, cfg.dim);
    if (dim == 2) rows.push_back(verify_primitive<2>(spec, cfg.train.K, cfg.n, cfg.train.seed));
    else rows.push_back(verify_primitive<3>(spec, cfg.train.K, cfg.n, cfg.train.seed));
  }
  return rows;
}

/// Runs the analytic identity suite and writes verify.csv; any violation
/// yields kExitViolation.
inline int run_verify(RunConfig cfg, std::ostream& log) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  auto out_path = [&](const std::string& f) { return (std::filesystem::path(cfg.out_dir) / f).string(); };
  const auto rows = verify_rows(cfg);
  bool ok = true;
  {
    std::ofstream os(out_path("verify.csv"), std::ios::binary);
    os << "primitive,dim,K,n,max_eikonal_rel,max_eigen_gap,min_alignment,max_ma_rel,max_hgrad_rel,pass\n"
       << std::setprecision(17);
    for (const auto& r : rows) {
      const auto& q = r.report;
      os << r.primitive << ',' << r.dim << ',' << cfg.train.K << ',' << q.points << ',' << q.max_eikonal_rel << ','
         << q.max_eigen_gap << ',' << q.min_alignment << ',' << q.max_ma_rel << ',' << q.max_hgrad_rel << ','
         << (q.passes() ? "true" : "false") << '\n';
      log << r.primitive << " (" << r.dim << "D): " << (q.passes() ? "pass" : "FAIL") << "  eikonal "
          << q.max_eikonal_rel << "  eigen gap " << q.max_eigen_gap << "  alignment " << q.min_alignment << "  ma "
          << q.max_ma_rel << '\n';
      ok = ok && q.passes();
    }
  }
  write_manifest(out_path(manifest_name(cfg.command)), Manifest{cfg, {"verify.csv"}, -1});
  return ok ? kExitOk : kExitViolation;
}

// ---------------------------------------------------------------------------
// Train, extract and score in memory (ablations and acceptance runs).

template <int D>
struct VariantResult {
  SirenParams params;
  TrainHistory history;
  bool diverged = false;
  bool empty = false;
  MetricReport metrics;  // NaN fields when empty or diverged
  PointCloud<D> samples;  // reconstruction samples (normalized coordinates)
};

template <int D>
VariantResult<D> train_extract_score(const RunConfig& cfg, const PointCloud<D>& input, const PointCloud<D>& gt,
                                     const TrainCallback& callback = {}) {
  VariantResult<D> out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.metrics = {nan, nan, nan, cfg.tau};
  try {
    auto r = train<D>(input, cfg.resolved_train(), callback);
    out.params = std::move(r.params);
    out.history = std::move(r.history);
  } catch (const TrainingAborted& e) {
    out.params = e.last_good;
    out.history = e.history;
    out.diverged = true;
    return out;
  }
  const auto udf = udf_grid<D>(out.params, cfg);
  if constexpr (D == 2) {
    const auto contour = extract_iso_2d(udf, cfg.iso);
    out.empty = contour.empty();
    if (!out.empty) out.samples = sample_contour(contour, cfg.samples, cfg.eval_seed);
  } else {
    ExecOptions exec;
    exec.threads = cfg.threads;
    const auto mesh = extract_iso_3d(udf, cfg.iso, exec);
    out.empty = mesh.empty();
    if (!out.empty) out.samples = sample_mesh_surface(mesh, cfg.samples, cfg.eval_seed);
  }
  if (!out.empty) out.metrics = evaluate_metrics(out.samples, gt, cfg.tau, cfg.threads);
  return out;
}

/// Ablation matrix over K values, loss-term subsets or the regularizer;
/// writes ablation_<kind>.csv.
template <int D>
int run_ablate(RunConfig cfg, std::ostream& log) {
  cfg.dim = D;
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  auto out_path = [&](const std::string& f) { return (std::filesystem::path(cfg.out_dir) / f).string(); };
  const auto input = io::read_cloud<D>(cfg.input);
  if (input.empty()) throw DegenerateInput("input cloud is empty: " + cfg.input);
  PointCloud<D> gt;
  if (!cfg.gt.empty() || !cfg.gt_primitive.empty()) {
    gt = ground_truth_samples<D>(cfg);
  } else {
    gt = input;
    if (cfg.train.normalize) gt = normalize_cloud(input).first;
  }

  std::vector<RunConfig> variants;
  std::vector<std::string> labels;
  if (cfg.ablation == "k") {
    for (double K : detail::parse_list<double>("k_values", cfg.k_values)) {
      RunConfig v = cfg;
      v.train.K = K;
      variants.push_back(v);
      labels.push_back("K=" + detail::format_double(K));
    }
  } else if (cfg.ablation == "loss") {
    for (const char* terms : {"dirichlet", "neumann", "dirichlet,neumann", "dirichlet,neumann,nonmanifold",
                              "dirichlet,neumann,ma", "all"}) {
      RunConfig v = cfg;
      v.terms = terms;
      variants.push_back(v);
      std::string label = terms;
      std::replace(label.begin(), label.end(), ',', '+');
      labels.push_back(label);
    }
  } else if (cfg.ablation == "regularizer") {
    for (auto reg : {Regularizer::kMongeAmpere, Regularizer::kEikonalPrime}) {
      RunConfig v = cfg;
      v.train.regularizer = reg;
      variants.push_back(v);
      labels.emplace_back(to_string(reg));
    }
  } else {
    throw ParseError("unknown ablation '" + cfg.ablation + "' (k | loss | regularizer)");
  }

  const std::string name = "ablation_" + cfg.ablation + ".csv";
  std::ofstream os(out_path(name), std::ios::binary);
  os << "variant,K,terms,loss,diverged,empty,final_loss,cd_x1e3,nc,fscore,tau\n" << std::setprecision(17);
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    log << "variant " << labels[i] << " ...\n";
    const auto r = train_extract_score<D>(v, input, gt);
    std::string terms = v.terms;
    std::replace(terms.begin(), terms.end(), ',', '+');
    const double final_loss = r.history.empty() ? std::numeric_limits<double>::quiet_NaN() : r.history.back().loss.total;
    os << labels[i] << ',' << v.train.K << ',' << terms << ',' << to_string(v.train.regularizer) << ','
       << (r.diverged ? "true" : "false") << ',' << (r.empty ? "true" : "false") << ',' << final_loss << ','
       << r.metrics.cd_l1_x1e3 << ',' << r.metrics.nc_percent << ',' << r.metrics.fscore_percent << ','
       << r.metrics.threshold << '\n';
    log << "  " << (r.diverged ? "diverged" : r.empty ? "empty extraction" : "ok") << "  CD(x1e3) "
        << r.metrics.cd_l1_x1e3 << "  F " << r.metrics.fscore_percent << '\n';
  }
  write_manifest(out_path(manifest_name(cfg.command)), Manifest{cfg, {name}, -1});
  return kExitOk;
}

}  // namespace s2df

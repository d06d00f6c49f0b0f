#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <openssl/opensslv.h>
#include <png.h>

#include "ftirpad/calibration.hpp"
#include "ftirpad/dataset.hpp"
#include "ftirpad/error.hpp"
#include "ftirpad/evaluation.hpp"
#include "ftirpad/io.hpp"
#include "ftirpad/pipeline.hpp"
#include "ftirpad/png_io.hpp"

namespace ftirpad {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kRunSummaryFormatVersion = 1;

// ---------------------------------------------------------------- timing

struct TimingStats {
  std::string stage;
  std::size_t count = 0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  double total_ms = 0.0;
};

inline TimingStats summarize_timings(std::string stage, std::vector<double> ms) {
  TimingStats t;
  t.stage = std::move(stage);
  t.count = ms.size();
  if (ms.empty()) return t;
  std::sort(ms.begin(), ms.end());
  for (double v : ms) t.total_ms += v;
  t.mean_ms = t.total_ms / static_cast<double>(ms.size());
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(ms.size())));
  t.p95_ms = ms[std::max<std::size_t>(rank, 1) - 1];
  return t;
}

/// Runs work(i) for i in [0, n) on the calling thread, timing each call.
template <class Fn>
TimingStats timing_probe(std::string stage, std::size_t n, Fn&& work) {
  std::vector<double> ms;
  ms.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    work(i);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return summarize_timings(std::move(stage), std::move(ms));
}

inline json to_json(const TimingStats& t) {
  return {{"stage", t.stage}, {"count", t.count}, {"mean_ms", t.mean_ms}, {"p95_ms", t.p95_ms}, {"total_ms", t.total_ms}};
}

// ---------------------------------------------------------------- config

struct CalibrationSettings {
  std::optional<std::filesystem::path> pairs;  // external correspondences; synthetic board otherwise
  int board_rows = 6;
  int board_cols = 8;
  int square_px = 40;
};

struct ExperimentConfig {
  std::optional<DatasetConfig> dataset;
  std::optional<std::filesystem::path> manifest;
  CalibrationSettings calibration;
  std::vector<MethodSpec> methods{MethodSpec{}};
  std::vector<Protocol> protocols{Protocol::Known};
  std::uint64_t seed = 1;
  std::filesystem::path out = "run";
  unsigned jobs = 1;
  bool perf_log = false;
  double fdr_target = 0.01;
  int folds = 5;

  void validate() const {
    if (!dataset && !manifest) throw ConfigError("experiment: give a dataset config or a manifest path");
    if (dataset && manifest) throw ConfigError("experiment: dataset and manifest are mutually exclusive");
    if (dataset) dataset->validate();
    if (methods.empty()) throw ConfigError("experiment: at least one method");
    std::set<std::string> names;
    for (const auto& m : methods) {
      m.validate();
      if (!names.insert(m.name).second) throw ConfigError("experiment: duplicate method name '" + m.name + "'");
    }
    if (protocols.empty()) throw ConfigError("experiment: at least one protocol");
    if (calibration.board_rows < 3 || calibration.board_cols < 3 || calibration.square_px < 2)
      throw ConfigError("experiment: calibration board too small");
    if (!(fdr_target >= 0 && fdr_target <= 1)) throw ConfigError("experiment: fdr_target must lie in [0, 1]");
  }
};

inline json to_json(const ExperimentConfig& c) {
  json j;
  if (c.dataset) j["dataset"] = to_json(*c.dataset);
  if (c.manifest) j["manifest"] = c.manifest->string();
  json cal{{"board_rows", c.calibration.board_rows},
           {"board_cols", c.calibration.board_cols},
           {"square_px", c.calibration.square_px}};
  if (c.calibration.pairs) cal["pairs"] = c.calibration.pairs->string();
  j["calibration"] = cal;
  json methods = json::array();
  for (const auto& m : c.methods) methods.push_back(to_json(m));
  j["methods"] = methods;
  json protocols = json::array();
  for (auto p : c.protocols) protocols.push_back(to_string(p));
  j["protocols"] = protocols;
  j["seed"] = c.seed;
  j["out"] = c.out.string();
  j["jobs"] = c.jobs;
  j["perf_log"] = c.perf_log;
  j["fdr_target"] = c.fdr_target;
  j["folds"] = c.folds;
  return j;
}

/// Relative paths in the config resolve against `base`.
inline ExperimentConfig experiment_config_from_json(const json& j, const std::filesystem::path& base = {}) {
  try {
    ExperimentConfig c;
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_relative() && !base.empty() ? base / path : path;
    };
    if (j.contains("dataset")) c.dataset = dataset_config_from_json(j.at("dataset"));
    if (j.contains("manifest")) c.manifest = resolve(j.at("manifest").get<std::string>());
    if (j.contains("calibration")) {
      const auto& k = j.at("calibration");
      if (k.contains("pairs")) c.calibration.pairs = resolve(k.at("pairs").get<std::string>());
      c.calibration.board_rows = k.value("board_rows", c.calibration.board_rows);
      c.calibration.board_cols = k.value("board_cols", c.calibration.board_cols);
      c.calibration.square_px = k.value("square_px", c.calibration.square_px);
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(method_from_json(m));
    }
    if (j.contains("protocols")) {
      c.protocols.clear();
      for (const auto& p : j.at("protocols")) c.protocols.push_back(protocol_from_string(p.get<std::string>()));
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("out")) c.out = resolve(j.at("out").get<std::string>());
    c.jobs = j.value("jobs", c.jobs);
    c.perf_log = j.value("perf_log", c.perf_log);
    c.fdr_target = j.value("fdr_target", c.fdr_target);
    c.folds = j.value("folds", c.folds);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
}

// ---------------------------------------------------------------- run

inline json library_versions() {
  return {{"ftirpad", kToolVersion},
          {"libpng", PNG_LIBPNG_VER_STRING},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"openssl", OPENSSL_VERSION_TEXT},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

struct CalibrationResult {
  PerspectiveEstimate estimate;
  ResolutionMap native;   // observed-image resolution per cell
  NativePpi frontal_ppi;  // uniform resolution after frontalization
};

/// Renders a board through the dataset's FTIR keystone (or reads external
/// correspondences) and fits the frontalizing transform and resolution map.
inline CalibrationResult calibrate_reader(const DatasetConfig& d, const CalibrationSettings& s) {
  Correspondences pairs;
  const double square_mm = s.square_px / d.render.px_per_mm;
  if (s.pairs) {
    pairs = correspondences_from_json(read_json_file(*s.pairs));
  } else {
    const auto board = synth_checkerboard(s.board_rows, s.board_cols, s.square_px, d.render.ftir_distortion);
    pairs = board.observed_to_ideal();
  }
  CalibrationResult r;
  r.estimate = estimate_perspective(pairs);
  r.native = estimate_resolution(pairs, square_mm);
  Correspondences frontal;
  for (const auto& c : pairs) frontal.push_back({c.dst, c.dst});
  const auto fr = estimate_resolution(frontal, square_mm);
  r.frontal_ppi = {fr.mean_ppi_x(), fr.mean_ppi_y()};
  return r;
}

struct ExperimentResult {
  std::filesystem::path summary_path;
  std::vector<EvalReport> reports;
  bool all_converged = true;
};

namespace detail {

struct StageRunner {
  std::filesystem::path out;
  bool perf_log;
  json timings = json::array();

  template <class Fn>
  void operator()(const std::string& stage, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const ConfigError& e) {
      mark_stale(stage, e.what());
      throw ConfigError("stage '" + stage + "': " + e.what());
    } catch (const DataError& e) {
      mark_stale(stage, e.what());
      throw DataError("stage '" + stage + "': " + e.what());
    } catch (const std::exception& e) {
      mark_stale(stage, e.what());
      throw DataError("stage '" + stage + "': " + e.what());
    }
    if (perf_log)
      timings.push_back(
          {{"stage", stage},
           {"wall_ms", std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()}});
  }

  void mark_stale(const std::string& stage, const std::string& what) const {
    try {
      write_text_file(out / "STALE.json", json{{"failed_stage", stage}, {"error", what}}.dump(2) + "\n");
    } catch (...) {
    }
  }
};

}  // namespace detail

/// simulate (unless a manifest is given) -> calibrate -> process -> extract
/// -> train/evaluate, writing every artifact under cfg.out and a
/// run_summary.json that hashes them.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out);
  fs::remove(cfg.out / "STALE.json");
  fs::remove(cfg.out / "run_summary.json");
  write_text_file(cfg.out / "config.json", to_json(cfg).dump(2) + "\n");

  detail::StageRunner stage{cfg.out, cfg.perf_log};
  ExperimentResult result;
  DatasetManifest manifest;
  fs::path manifest_path;
  json inputs = json::object();

  stage("simulate", [&] {
    if (cfg.manifest) {
      manifest_path = *cfg.manifest;
      manifest = load_manifest(manifest_path);
      inputs["manifest_sha256"] = sha256_file(manifest_path);
    } else {
      manifest_path = cfg.out / "dataset" / "manifest.json";
      manifest = generate_dataset(*cfg.dataset, substream_seed(cfg.seed, "simulate"), cfg.out / "dataset",
                                  {.force = true, .jobs = cfg.jobs});
    }
  });

  CalibrationResult cal;
  stage("calibrate", [&] {
    if (cfg.calibration.pairs) inputs["pairs_sha256"] = sha256_file(*cfg.calibration.pairs);
    cal = calibrate_reader(manifest.config, cfg.calibration);
    write_text_file(cfg.out / "calibration" / "transform.json", to_json(cal.estimate).dump(2) + "\n");
    json res = to_json(cal.native);
    res["frontal_ppi"] = {cal.frontal_ppi.x, cal.frontal_ppi.y};
    write_text_file(cfg.out / "calibration" / "resolution.json", res.dump(2) + "\n");
  });

  json timing_stats = json::array();
  stage("process", [&] {
    fs::create_directories(cfg.out / "processed");
    std::vector<double> ms(manifest.samples.size());
    parallel_for(manifest.samples.size(), cfg.jobs, [&](std::size_t i) {
      const auto& s = manifest.samples[i];
      const Image raw = read_png(manifest.file(s, View::Ftir));
      const auto t0 = std::chrono::steady_clock::now();
      const Image out = process_ftir(raw, cal.estimate.transform, cal.frontal_ppi);
      ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      write_png(cfg.out / "processed" / fs::path(s.ftir_path).filename(), out);
    });
    if (cfg.perf_log) timing_stats.push_back(to_json(summarize_timings("process", ms)));
  });

  FeatureStore store(manifest, cfg.jobs);
  stage("extract", [&] {
    store.gate_decisions();
    std::set<std::pair<View, DescriptorKind>> needed;
    for (const auto& m : cfg.methods)
      for (View v : m.views) needed.insert({v, m.descriptor});
    for (const auto& [v, k] : needed) {
      const auto& e = store.features(v, k);
      FeatureTable t;
      t.kind = k;
      t.dim = e.rows.empty() ? 0 : e.rows[0].dim();
      for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        t.samples.push_back(manifest.samples[i].key);
        t.capture_accepted.push_back(store.gate_decisions()[i].accepted);
        t.rows.push_back(e.rows[i].values);
      }
      const auto d = descriptor_dims(v);
      t.meta = {{"view", to_string(v)}, {"descriptor_input", {d.width, d.height}}, {"manifest", manifest_path.string()}};
      write_features(cfg.out / "features" / (std::string(to_string(v)) + "_" + slug(to_string(k)) + ".bin"), t);
      if (cfg.perf_log)
        timing_stats.push_back(to_json(summarize_timings("extract/" + std::string(to_string(v)) + "/" +
                                                             slug(to_string(k)), e.ms)));
    }
  });

  stage("evaluate", [&] {
    ProtocolOptions po;
    po.fdr_target = cfg.fdr_target;
    po.perf_log = cfg.perf_log;
    for (const auto& m : cfg.methods)
      for (auto p : cfg.protocols) {
        auto rep = run_protocol(store, m, p, substream_seed(cfg.seed, "evaluate"), po, cfg.folds);
        const std::string stem = std::string(to_string(p)) + "_" + m.name;
        for (const auto& sm : rep.models)
          for (std::size_t s = 0; s < sm.models.size(); ++s)
            save_model(sm.models[s], cfg.out / "models" / stem / (slug(sm.split) + "_" + std::to_string(s) + ".json"));
        write_text_file(cfg.out / "reports" / (stem + ".json"), to_json(rep).dump(2) + "\n");
        result.all_converged = result.all_converged && rep.all_converged();
        result.reports.push_back(std::move(rep));
      }
    write_text_file(cfg.out / "reports" / "report.csv", report_csv(result.reports));
    write_text_file(cfg.out / "reports" / "report.txt", report_text(result.reports));
  });

  json artifacts = json::array();
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(cfg.out))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), cfg.out));
  std::sort(files.begin(), files.end());
  for (const auto& f : files) artifacts.push_back({{"path", f.generic_string()}, {"sha256", sha256_file(cfg.out / f)}});

  json summary{{"format_version", kRunSummaryFormatVersion},
               {"status", "complete"},
               {"seed", cfg.seed},
               {"versions", library_versions()},
               {"config", to_json(cfg)},
               {"inputs", inputs},
               {"all_converged", result.all_converged},
               {"artifacts", artifacts}};
  if (cfg.perf_log) summary["timings"] = {{"stages", stage.timings}, {"per_sample", timing_stats}};
  result.summary_path = cfg.out / "run_summary.json";
  write_text_file(result.summary_path, summary.dump(2) + "\n");
  return result;
}

}  // namespace ftirpad

// Command-line front end: one subcommand per pipeline stage plus `run`.
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 convergence
// warning under --strict.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ftirpad/ftirpad.hpp"

namespace fs = std::filesystem;
using namespace ftirpad;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitConvergence = 4;

struct Globals {
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  std::string out;
  bool strict = false;
};

std::string require_out(const Globals& g, const std::string& what) {
  if (g.out.empty()) throw ConfigError("--out <" + what + "> is required");
  return g.out;
}

int convergence_exit(const Globals& g, bool converged) {
  if (converged) return 0;
  std::cerr << "warning: SVM solver hit its iteration cap before meeting tolerance\n";
  return g.strict ? kExitConvergence : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-camera FTIR fingerprint reader: simulation, calibration, processing and spoof detection"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "top-level seed")->capture_default_str();
  app.add_option("--jobs", g.jobs, "worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--out", g.out, "output file or directory");
  app.add_flag("--strict", g.strict, "treat SVM convergence warnings as failure (exit 4)");

  // geometry
  GeometrySpec geo;
  auto* geometry = app.add_subcommand("geometry", "check camera placement against the critical angle");
  geometry->add_option("--n-glass", geo.n_glass)->capture_default_str();
  geometry->add_option("--n-air", geo.n_air)->capture_default_str();
  geometry->add_option("--theta-direct", geo.theta_direct_deg, "direct camera angle (deg)")->capture_default_str();
  geometry->add_option("--theta-ftir", geo.theta_ftir_deg, "FTIR camera angle (deg)")->capture_default_str();
  geometry->add_option("--distance-mm", geo.camera_distance_mm)->capture_default_str();

  // simulate
  std::string sim_config, sim_preset;
  bool force = false;
  auto* simulate = app.add_subcommand("simulate", "render a synthetic dual-view dataset");
  simulate->add_option("--config", sim_config, "dataset config JSON");
  simulate->add_option("--preset", sim_preset, "full | desk")->check(CLI::IsMember({"full", "desk"}));
  simulate->add_flag("--force", force, "overwrite an existing manifest");

  // board
  int board_rows = 6, board_cols = 8, board_square = 40;
  std::string board_transform, board_pairs;
  auto* board = app.add_subcommand("board", "render a checkerboard through a transform and emit its corners");
  board->add_option("--rows", board_rows)->capture_default_str();
  board->add_option("--cols", board_cols)->capture_default_str();
  board->add_option("--square-px", board_square)->capture_default_str();
  board->add_option("--transform", board_transform, "transform JSON applied to the ideal board");
  board->add_option("--pairs", board_pairs, "where to write observed->ideal correspondences")->required();

  // calibrate
  std::string pairs_path;
  auto* calibrate = app.add_subcommand("calibrate", "fit the perspective transform from correspondences");
  calibrate->add_option("--pairs", pairs_path)->required()->check(CLI::ExistingFile);

  // resolution
  double pitch_mm = 0;
  auto* resolution = app.add_subcommand("resolution", "native ppi per checkerboard cell");
  resolution->add_option("--pairs", pairs_path)->required()->check(CLI::ExistingFile);
  resolution->add_option("--pitch-mm", pitch_mm)->required();

  // process
  std::string raw_path, transform_path;
  double ppi_x = 0, ppi_y = 0;
  auto* process = app.add_subcommand("process", "raw FTIR frame -> 500 ppi grayscale print");
  process->add_option("--raw", raw_path)->required()->check(CLI::ExistingFile);
  process->add_option("--transform", transform_path)->required()->check(CLI::ExistingFile);
  process->add_option("--ppi-x", ppi_x)->required();
  process->add_option("--ppi-y", ppi_y)->required();

  // extract
  std::string manifest_path, view_name = "ftir", kind_name = "clbp";
  auto* extract = app.add_subcommand("extract", "compute descriptors for every manifest sample");
  extract->add_option("--manifest", manifest_path)->required();
  extract->add_option("--view", view_name)->check(CLI::IsMember({"ftir", "direct", "both"}))->capture_default_str();
  extract->add_option("--kind", kind_name)->check(CLI::IsMember({"lbp", "clbp"}))->capture_default_str();

  // train
  std::string features_path;
  std::optional<double> train_c;
  bool select = false;
  auto* train = app.add_subcommand("train", "fit a linear SVM on a feature file");
  train->add_option("--features", features_path)->required();
  train->add_option("--labels-from-manifest", manifest_path)->required();
  auto* c_opt = train->add_option("--C", train_c, "fixed C");
  auto* sel_opt = train->add_flag("--select-C", select, "5-fold cross-validated C over 1e-5..1e5");
  c_opt->excludes(sel_opt);

  // eval
  std::string method_path, protocol_name = "known";
  double fdr = 0.01;
  bool perf_log = false;
  auto* eval = app.add_subcommand("eval", "run an evaluation protocol");
  eval->add_option("--manifest", manifest_path)->required();
  eval->add_option("--method", method_path, "method name (ftir-clbp, direct-lbp, fusion-clbp, mean-clbp, ...) or method spec JSON");
  eval->add_option("--protocol", protocol_name)->check(CLI::IsMember({"known", "cross"}))->capture_default_str();
  eval->add_option("--fdr", fdr, "FDR target as a fraction")->capture_default_str();
  eval->add_flag("--perf-log", perf_log, "record ms/sample");

  // run
  std::string run_config;
  auto* run = app.add_subcommand("run", "full pipeline from an experiment config");
  run->add_option("--config", run_config)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*geometry) {
      const auto r = validate_geometry(geo);
      std::cout << json{{"critical_angle_deg", r.critical_angle_deg},
                        {"direct_ok", r.direct_ok},
                        {"ftir_ok", r.ftir_ok}}
                       .dump(2)
                << "\n";
      return r.ok() ? 0 : kExitConfig;
    }

    if (*simulate) {
      DatasetConfig cfg;
      if (!sim_config.empty()) cfg = dataset_config_from_json(read_json_file(sim_config));
      else if (sim_preset == "full") cfg = DatasetConfig::full();
      else cfg = DatasetConfig::desk();
      const auto m = generate_dataset(cfg, g.seed, require_out(g, "dir"), {.force = force, .jobs = g.jobs});
      std::cout << "wrote " << m.samples.size() << " dual-view samples to " << fs::path(g.out) / "manifest.json" << "\n";
      return 0;
    }

    if (*board) {
      PerspectiveTransform t;
      if (!board_transform.empty()) t = transform_from_json(read_json_file(board_transform));
      const auto b = synth_checkerboard(board_rows, board_cols, board_square, t);
      write_png(require_out(g, "png"), b.image);
      write_text_file(board_pairs, to_json(b.observed_to_ideal()).dump(2) + "\n");
      return 0;
    }

    if (*calibrate) {
      const auto est = estimate_perspective(correspondences_from_json(read_json_file(pairs_path)));
      const std::string text = to_json(est).dump(2) + "\n";
      if (g.out.empty()) std::cout << text;
      else write_text_file(g.out, text);
      std::cerr << "reprojection residual: rms " << est.residual.rms_px << " px, max " << est.residual.max_px << " px\n";
      return 0;
    }

    if (*resolution) {
      const auto map = estimate_resolution(correspondences_from_json(read_json_file(pairs_path)), pitch_mm);
      const std::string text = to_json(map).dump(2) + "\n";
      if (g.out.empty()) std::cout << text;
      else write_text_file(g.out, text);
      return 0;
    }

    if (*process) {
      const Image out = process_ftir(read_png(raw_path), transform_from_json(read_json_file(transform_path)),
                                     {ppi_x, ppi_y});
      write_png(require_out(g, "png"), out);
      return 0;
    }

    if (*extract) {
      const auto m = load_manifest(manifest_path);
      FeatureStore store(m, g.jobs);
      const auto kind = descriptor_kind_from_string(kind_name);
      std::vector<View> views;
      if (view_name == "both") views = {View::Ftir, View::Direct};
      else views = {view_from_string(view_name)};
      FeatureTable t;
      const auto& gates = store.gate_decisions();
      for (std::size_t i = 0; i < m.samples.size(); ++i) {
        FeatureVector fv = store.features(views[0], kind).rows[i];
        for (std::size_t k = 1; k < views.size(); ++k) fv = fuse_features(fv, store.features(views[k], kind).rows[i]);
        t.kind = fv.kind;
        t.dim = fv.dim();
        t.samples.push_back(m.samples[i].key);
        t.capture_accepted.push_back(gates[i].accepted);
        t.rows.push_back(std::move(fv.values));
      }
      json inputs = json::object();
      for (View v : views) {
        const auto d = descriptor_dims(v);
        inputs[std::string(to_string(v))] = {d.width, d.height};
      }
      t.meta = {{"view", view_name}, {"descriptor_input", inputs}, {"manifest", fs::absolute(manifest_path).string()}};
      write_features(require_out(g, "features"), t);
      std::cout << "wrote " << t.rows.size() << " x " << t.dim << " " << to_string(t.kind) << " features\n";
      return 0;
    }

    if (*train) {
      if (!train_c && !select) throw ConfigError("train: give --C <value> or --select-C");
      const auto m = load_manifest(manifest_path);
      const auto t = read_features(features_path);
      std::map<std::string, const SampleRecord*> by_key;
      for (const auto& s : m.samples) by_key[s.key] = &s;
      FeatureRows x;
      std::vector<int> y;
      std::vector<std::uint64_t> ids;
      for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (!t.capture_accepted[i]) continue;
        const auto it = by_key.find(t.samples[i]);
        if (it == by_key.end()) throw DataError("feature row '" + t.samples[i] + "' is not in the manifest");
        x.push_back(t.rows[i]);
        y.push_back(label_sign(it->second->label));
        ids.push_back(it->second->id());
      }
      double c = train_c.value_or(0.0);
      if (select) {
        const auto sel = select_c(x, y, ids, default_c_grid(), 5, substream_seed(g.seed, "select-c"), t.kind);
        c = sel.best_c;
        for (std::size_t k = 0; k < sel.grid.size(); ++k)
          std::cerr << "C=" << sel.grid[k] << " mean CV accuracy " << sel.mean_accuracy[k] << "\n";
      }
      const auto model = train_svm(x, y, c, g.seed, t.kind);
      save_model(model, require_out(g, "model.json"));
      std::cout << "trained C=" << c << " on " << x.size() << " samples, objective " << model.objective_value << "\n";
      return convergence_exit(g, model.converged);
    }

    if (*eval) {
      const auto m = load_manifest(manifest_path);
      MethodSpec method;
      if (!method_path.empty()) {
        if (auto named = named_method(method_path); named && !fs::exists(method_path)) method = *named;
        else method = method_from_json(read_json_file(method_path));
      }
      FeatureStore store(m, g.jobs);
      ProtocolOptions po;
      po.fdr_target = fdr;
      po.perf_log = perf_log;
      const auto rep = run_protocol(store, method, protocol_from_string(protocol_name), g.seed, po);
      const fs::path dir = require_out(g, "dir");
      const std::string stem = protocol_name + "_" + method.name;
      write_text_file(dir / (stem + ".csv"), report_csv({rep}));
      write_text_file(dir / (stem + ".txt"), report_text({rep}));
      write_text_file(dir / (stem + ".json"), to_json(rep).dump(2) + "\n");
      for (const auto& sm : rep.models)
        for (std::size_t s = 0; s < sm.models.size(); ++s)
          save_model(sm.models[s], dir / "models" / stem / (slug(sm.split) + "_" + std::to_string(s) + ".json"));
      std::cout << report_text({rep});
      return convergence_exit(g, rep.all_converged());
    }

    if (*run) {
      auto cfg = experiment_config_from_json(read_json_file(run_config), fs::path(run_config).parent_path());
      if (!g.out.empty()) cfg.out = g.out;
      if (app.count("--seed")) cfg.seed = g.seed;
      if (app.count("--jobs")) cfg.jobs = g.jobs;
      const auto res = run_experiment(cfg);
      std::cout << report_text(res.reports) << "summary: " << res.summary_path.string() << "\n";
      return convergence_exit(g, res.all_converged);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}

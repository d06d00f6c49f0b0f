#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ftirpad/error.hpp"
#include "ftirpad/lbp.hpp"
#include "ftirpad/parallel.hpp"
#include "ftirpad/png_io.hpp"
#include "ftirpad/rng.hpp"
#include "ftirpad/simulator.hpp"
#include "ftirpad/svm.hpp"

namespace ftirpad {

using nlohmann::json;

inline constexpr int kManifestFormatVersion = 1;

struct LiveCounts {
  int subjects = 4;
  int fingers = 2;
  int impressions = 3;
};

struct MaterialCounts {
  MaterialSpec spec;
  int instances = 2;
  int impressions = 3;
};

struct DatasetConfig {
  std::string name = "custom";
  LiveCounts live;
  std::vector<MaterialCounts> materials;
  RenderSettings render;
  double ridge_frequency_min = 56.0;
  double ridge_frequency_max = 72.0;

  void validate() const {
    if (live.subjects < 1 || live.fingers < 1 || live.impressions < 1)
      throw ConfigError("dataset: live counts must be >= 1");
    std::set<std::string> names;
    for (const auto& m : materials) {
      m.spec.validate();
      if (m.instances < 1 || m.impressions < 1)
        throw ConfigError("dataset: counts for material '" + m.spec.name + "' must be >= 1");
      if (!names.insert(m.spec.name).second) throw ConfigError("dataset: material '" + m.spec.name + "' listed twice");
    }
    if (render.ftir.width <= 0 || render.ftir.height <= 0 || render.direct.width <= 0 || render.direct.height <= 0)
      throw ConfigError("dataset: render dimensions must be positive");
    if (!(ridge_frequency_min > 0) || ridge_frequency_max < ridge_frequency_min)
      throw ConfigError("dataset: invalid ridge frequency range");
  }

  int live_count() const { return live.subjects * live.fingers * live.impressions; }
  int spoof_count() const {
    int n = 0;
    for (const auto& m : materials) n += m.instances * m.impressions;
    return n;
  }

  /// Full-size collection: 15 subjects x 10 fingers x 5 impressions live,
  /// the seven materials at their collected spoof counts, 10 impressions each.
  static DatasetConfig full() {
    DatasetConfig c;
    c.name = "full";
    c.live = {15, 10, 5};
    for (const auto& n : spoof_material_names()) c.materials.push_back({material_preset(n), full_spoof_count(n), 10});
    return c;
  }

  /// Small CI-sized collection: 4 x 2 x 3 live, 7 materials x 2 spoofs x 3.
  static DatasetConfig desk() {
    DatasetConfig c;
    c.name = "desk";
    c.live = {4, 2, 3};
    for (const auto& n : spoof_material_names()) c.materials.push_back({material_preset(n), 2, 3});
    return c;
  }

  const MaterialSpec& material(const std::string& name) const {
    for (const auto& m : materials)
      if (m.spec.name == name) return m.spec;
    throw DataError("dataset: no material named '" + name + "'");
  }
};

inline json to_json(const MaterialSpec& m) {
  return {{"name", m.name},
          {"hue_shift", m.hue_shift},
          {"saturation_scale", m.saturation_scale},
          {"texture_noise_sigma", m.texture_noise_sigma},
          {"transparency", m.transparency},
          {"albedo", m.albedo}};
}

inline json to_json(const DatasetConfig& c) {
  json mats = json::array();
  for (const auto& m : c.materials) {
    json j = to_json(m.spec);
    j["instances"] = m.instances;
    j["impressions"] = m.impressions;
    mats.push_back(j);
  }
  const auto& p = c.render.ftir_distortion.params();
  return {{"name", c.name},
          {"live", {{"subjects", c.live.subjects}, {"fingers", c.live.fingers}, {"impressions", c.live.impressions}}},
          {"materials", mats},
          {"render",
           {{"ftir", {c.render.ftir.width, c.render.ftir.height}},
            {"direct", {c.render.direct.width, c.render.direct.height}},
            {"px_per_mm", c.render.px_per_mm},
            {"ftir_tint_saturation", c.render.ftir_tint_saturation},
            {"ftir_distortion", std::vector<double>(p.begin(), p.end())}}},
          {"ridge_frequency", {c.ridge_frequency_min, c.ridge_frequency_max}}};
}

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline Dims read_dims(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("dataset: dims must be [width, height]");
  return {j[0].get<int>(), j[1].get<int>()};
}

}  // namespace detail

/// Parses a dataset config.  A "preset" key ("full" or "desk") seeds the
/// config; any other keys override it.
inline DatasetConfig dataset_config_from_json(const json& j) {
  try {
    DatasetConfig c;
    if (j.contains("preset")) {
      const auto p = j.at("preset").get<std::string>();
      if (p == "full") c = DatasetConfig::full();
      else if (p == "desk") c = DatasetConfig::desk();
      else throw ConfigError("dataset: unknown preset '" + p + "'");
    }
    detail::read_opt(j, "name", c.name);
    if (j.contains("live")) {
      const auto& l = j.at("live");
      detail::read_opt(l, "subjects", c.live.subjects);
      detail::read_opt(l, "fingers", c.live.fingers);
      detail::read_opt(l, "impressions", c.live.impressions);
    }
    if (j.contains("materials")) {
      c.materials.clear();
      for (const auto& m : j.at("materials")) {
        MaterialCounts mc;
        const auto name = m.at("name").get<std::string>();
        try {
          mc.spec = material_preset(name);
        } catch (const ConfigError&) {
          mc.spec.name = name;
        }
        detail::read_opt(m, "hue_shift", mc.spec.hue_shift);
        detail::read_opt(m, "saturation_scale", mc.spec.saturation_scale);
        detail::read_opt(m, "texture_noise_sigma", mc.spec.texture_noise_sigma);
        detail::read_opt(m, "transparency", mc.spec.transparency);
        detail::read_opt(m, "albedo", mc.spec.albedo);
        detail::read_opt(m, "instances", mc.instances);
        detail::read_opt(m, "impressions", mc.impressions);
        c.materials.push_back(mc);
      }
    }
    if (j.contains("render")) {
      const auto& r = j.at("render");
      if (r.contains("ftir")) c.render.ftir = detail::read_dims(r.at("ftir"));
      if (r.contains("direct")) c.render.direct = detail::read_dims(r.at("direct"));
      detail::read_opt(r, "px_per_mm", c.render.px_per_mm);
      detail::read_opt(r, "ftir_tint_saturation", c.render.ftir_tint_saturation);
      if (r.contains("ftir_distortion")) {
        const auto v = r.at("ftir_distortion").get<std::vector<double>>();
        if (v.size() != 8) throw ConfigError("dataset: ftir_distortion needs 8 parameters");
        PerspectiveTransform::Params p{};
        std::copy(v.begin(), v.end(), p.begin());
        c.render.ftir_distortion = PerspectiveTransform(p);
      }
    }
    if (j.contains("ridge_frequency")) {
      const auto v = j.at("ridge_frequency").get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError("dataset: ridge_frequency must be [min, max]");
      c.ridge_frequency_min = v[0];
      c.ridge_frequency_max = v[1];
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  }
}

enum class Label { Live, Spoof };

inline std::string_view to_string(Label l) { return l == Label::Live ? "live" : "spoof"; }

inline int label_sign(Label l) { return l == Label::Spoof ? kSpoof : kLive; }

/// One presentation: an FTIR file and a direct file captured together.
struct SampleRecord {
  std::string key;  // unique, stable, e.g. "live/s03/f1/i2"
  Label label = Label::Live;
  std::string material;  // spoofs
  std::string subject;   // live
  std::string finger;    // live
  int instance = -1;     // spoofs
  int impression = 0;
  std::string ftir_path;    // relative to the manifest directory
  std::string direct_path;

  std::uint64_t id() const { return fnv1a64(key); }
  const std::string& path(View v) const { return v == View::Ftir ? ftir_path : direct_path; }
  /// Spoof unit used for partitioning: material + instance.
  std::string spoof_unit() const { return material + "#" + std::to_string(instance); }
};

struct DatasetManifest {
  int format_version = kManifestFormatVersion;
  std::uint64_t seed = 0;
  std::string prng_name{Rng::kName};
  DatasetConfig config;
  std::vector<SampleRecord> samples;
  std::filesystem::path root;  // directory holding the manifest; not serialized

  std::filesystem::path file(const SampleRecord& s, View v) const { return root / s.path(v); }

  std::vector<std::string> subjects() const {
    std::set<std::string> out;
    for (const auto& s : samples)
      if (s.label == Label::Live) out.insert(s.subject);
    return {out.begin(), out.end()};
  }

  /// Spoof materials in first-appearance order.
  std::vector<std::string> materials() const {
    std::vector<std::string> out;
    for (const auto& s : samples)
      if (s.label == Label::Spoof && std::find(out.begin(), out.end(), s.material) == out.end())
        out.push_back(s.material);
    return out;
  }
};

inline std::string slug(std::string_view name) {
  std::string out;
  for (char ch : name) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) out += static_cast<char>(std::tolower(c));
    else if (!out.empty() && out.back() != '-') out += '-';
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

namespace detail {

inline std::string two_digits(int v) { return (v < 10 ? "0" : "") + std::to_string(v); }

}  // namespace detail

/// Enumerates every presentation of a config without rendering anything.
inline DatasetManifest plan_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DatasetManifest m;
  m.seed = seed;
  m.config = cfg;
  for (int s = 0; s < cfg.live.subjects; ++s)
    for (int f = 0; f < cfg.live.fingers; ++f)
      for (int i = 0; i < cfg.live.impressions; ++i) {
        SampleRecord r;
        r.label = Label::Live;
        r.subject = "s" + detail::two_digits(s);
        r.finger = "f" + std::to_string(f);
        r.impression = i;
        r.key = "live/" + r.subject + "/" + r.finger + "/i" + std::to_string(i);
        const std::string stem = "live_" + r.subject + "_" + r.finger + "_i" + std::to_string(i) + ".png";
        r.ftir_path = "ftir/" + stem;
        r.direct_path = "direct/" + stem;
        m.samples.push_back(r);
      }
  for (const auto& mc : cfg.materials)
    for (int k = 0; k < mc.instances; ++k)
      for (int i = 0; i < mc.impressions; ++i) {
        SampleRecord r;
        r.label = Label::Spoof;
        r.material = mc.spec.name;
        r.instance = k;
        r.impression = i;
        const std::string sl = slug(mc.spec.name);
        r.key = "spoof/" + sl + "/k" + std::to_string(k) + "/i" + std::to_string(i);
        const std::string stem = "spoof_" + sl + "_k" + std::to_string(k) + "_i" + std::to_string(i) + ".png";
        r.ftir_path = "ftir/" + stem;
        r.direct_path = "direct/" + stem;
        m.samples.push_back(r);
      }
  return m;
}

struct RenderInputs {
  FingerSpec finger;
  std::optional<MaterialSpec> material;
  Pose pose;
  std::uint64_t noise_seed = 0;
};

/// Everything render_views needs for one sample, drawn from named sub-streams
/// of the dataset seed.
inline RenderInputs render_inputs(const DatasetManifest& m, const SampleRecord& s) {
  const std::uint64_t seed = m.seed;
  const auto& cfg = m.config;
  RenderInputs in;
  std::string finger_key, presenter_key;
  if (s.label == Label::Live) {
    finger_key = "finger/" + s.subject + "/" + s.finger;
    presenter_key = "subject/" + s.subject;
    in.finger.subject_id = s.subject;
    in.finger.finger_id = s.finger;
  } else {
    finger_key = "spoof-finger/" + s.spoof_unit();
    presenter_key = "presenter/" + s.spoof_unit();
    in.finger.subject_id = "cast/" + s.spoof_unit();
    in.finger.finger_id = "0";
    in.material = cfg.material(s.material);
  }
  in.finger.pattern_seed = substream_seed(seed, finger_key);
  Rng ridge(substream_seed(seed, "ridge-frequency/" + finger_key));
  in.finger.ridge_frequency = ridge.uniform(cfg.ridge_frequency_min, cfg.ridge_frequency_max);
  Rng skin(substream_seed(seed, presenter_key));
  in.finger.skin_hue = skin.uniform(4.0, 24.0);
  in.finger.skin_saturation = skin.uniform(60.0, 160.0);
  Rng pose(substream_seed(seed, "pose/" + s.key));
  in.pose.tx = pose.uniform(-0.1, 0.1);
  in.pose.ty = pose.uniform(-0.1, 0.1);
  in.pose.rotation_deg = pose.uniform(-30.0, 30.0);
  in.pose.pressure = pose.uniform(0.3, 0.7);
  in.noise_seed = substream_seed(seed, "noise/" + s.key);
  return in;
}

inline RenderedViews render_sample(const DatasetManifest& m, const SampleRecord& s) {
  const auto in = render_inputs(m, s);
  return render_views(in.finger, in.material, in.pose, m.config.render, in.noise_seed);
}

inline json to_json(const DatasetManifest& m) {
  json entries = json::array();
  for (const auto& s : m.samples) {
    for (View v : {View::Ftir, View::Direct}) {
      json e{{"path", s.path(v)}, {"view", to_string(v)}, {"label", to_string(s.label)}, {"sample", s.key}};
      if (s.label == Label::Spoof) {
        e["material"] = s.material;
        e["instance"] = s.instance;
      } else {
        e["subject"] = s.subject;
        e["finger"] = s.finger;
      }
      e["impression"] = s.impression;
      entries.push_back(e);
    }
  }
  return {{"header",
           {{"format_version", m.format_version},
            {"seed", m.seed},
            {"prng_name", m.prng_name},
            {"config", to_json(m.config)}}},
          {"entries", entries}};
}

inline DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    const auto& h = j.at("header");
    m.format_version = h.at("format_version").get<int>();
    if (m.format_version != kManifestFormatVersion)
      throw DataError("manifest: unsupported format_version " + std::to_string(m.format_version));
    m.seed = h.at("seed").get<std::uint64_t>();
    m.prng_name = h.at("prng_name").get<std::string>();
    m.config = dataset_config_from_json(h.at("config"));
    std::map<std::string, std::size_t> index;
    std::set<std::string> paths;
    for (const auto& e : j.at("entries")) {
      const auto key = e.at("sample").get<std::string>();
      const auto path = e.at("path").get<std::string>();
      if (!paths.insert(path).second) throw DataError("manifest: file '" + path + "' referenced twice");
      auto [it, fresh] = index.try_emplace(key, m.samples.size());
      if (fresh) {
        SampleRecord r;
        r.key = key;
        const auto label = e.at("label").get<std::string>();
        if (label != "live" && label != "spoof") throw DataError("manifest: bad label '" + label + "'");
        r.label = label == "live" ? Label::Live : Label::Spoof;
        if (r.label == Label::Spoof) {
          r.material = e.at("material").get<std::string>();
          r.instance = e.at("instance").get<int>();
        } else {
          r.subject = e.at("subject").get<std::string>();
          r.finger = e.at("finger").get<std::string>();
        }
        r.impression = e.at("impression").get<int>();
        m.samples.push_back(r);
      }
      auto& r = m.samples[it->second];
      std::string& slot = view_from_string(e.at("view").get<std::string>()) == View::Ftir ? r.ftir_path : r.direct_path;
      if (!slot.empty()) throw DataError("manifest: sample '" + key + "' lists a view twice");
      slot = path;
    }
    for (const auto& r : m.samples)
      if (r.ftir_path.empty() || r.direct_path.empty())
        throw DataError("manifest: sample '" + r.key + "' lacks one of its two views");
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("manifest '" + path.string() + "' does not exist");
  DatasetManifest m = manifest_from_json(read_json_file(path));
  m.root = std::filesystem::absolute(path).parent_path();
  return m;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  write_text_file(path, to_json(m).dump(2) + "\n");
}

struct GenerateOptions {
  bool force = false;
  unsigned jobs = 1;
};

/// Renders every planned sample into `out_dir` (ftir/ and direct/ PNGs) and
/// writes `out_dir/manifest.json` last.
inline DatasetManifest generate_dataset(const DatasetConfig& cfg, std::uint64_t seed,
                                        const std::filesystem::path& out_dir, const GenerateOptions& opts = {}) {
  const auto manifest_path = out_dir / "manifest.json";
  if (std::filesystem::exists(manifest_path) && !opts.force)
    throw ConfigError("'" + manifest_path.string() + "' exists; pass --force to overwrite");
  DatasetManifest m = plan_dataset(cfg, seed);
  m.root = std::filesystem::absolute(out_dir);
  std::filesystem::create_directories(out_dir / "ftir");
  std::filesystem::create_directories(out_dir / "direct");
  parallel_for(m.samples.size(), opts.jobs, [&](std::size_t i) {
    const auto& s = m.samples[i];
    const auto views = render_sample(m, s);
    write_png(m.file(s, View::Ftir), views.ftir);
    write_png(m.file(s, View::Direct), views.direct);
  });
  save_manifest(m, manifest_path);
  return m;
}

}  // namespace ftirpad

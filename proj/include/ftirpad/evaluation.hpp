#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ftirpad/dataset.hpp"
#include "ftirpad/error.hpp"
#include "ftirpad/io.hpp"
#include "ftirpad/lbp.hpp"
#include "ftirpad/parallel.hpp"
#include "ftirpad/png_io.hpp"
#include "ftirpad/simulator.hpp"
#include "ftirpad/svm.hpp"

namespace ftirpad {

// ---------------------------------------------------------------- metric

/// Decision scores with labels kSpoof (+1) / kLive (-1).
struct ScoreSet {
  std::vector<double> scores;
  std::vector<int> labels;

  void add(double s, int label) {
    scores.push_back(s);
    labels.push_back(label);
  }
};

/// Presentations removed by the capture gate before scoring.
struct GateCounts {
  std::size_t live = 0;
  std::size_t spoof = 0;
};

struct TdrResult {
  double tdr = 0.0;
  double threshold = 0.0;
  double fdr = 0.0;  // achieved
  std::size_t n_live = 0;
  std::size_t n_spoof = 0;
};

/// Smallest threshold t (over observed scores, plus one value above them all)
/// whose false detect rate, live scored >= t over all live, is within
/// `fdr_target`; TDR is the fraction of spoofs scored >= t.  Gate-rejected
/// spoofs count as detected and gate-rejected live as false detects at every
/// threshold.
inline TdrResult tdr_at_fdr(const ScoreSet& s, double fdr_target = 0.01, GateCounts gate = {}) {
  if (s.scores.size() != s.labels.size()) throw DataError("tdr_at_fdr: scores and labels differ in length");
  if (!(fdr_target >= 0.0 && fdr_target <= 1.0)) throw ConfigError("tdr_at_fdr: FDR target must lie in [0, 1]");
  std::vector<double> live, spoof;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (!std::isfinite(s.scores[i])) throw DataError("tdr_at_fdr: non-finite score");
    if (s.labels[i] == kSpoof) spoof.push_back(s.scores[i]);
    else if (s.labels[i] == kLive) live.push_back(s.scores[i]);
    else throw DataError("tdr_at_fdr: labels must be +1 or -1");
  }
  TdrResult r;
  r.n_live = live.size() + gate.live;
  r.n_spoof = spoof.size() + gate.spoof;
  if (r.n_live == 0 || r.n_spoof == 0) throw DataError("tdr_at_fdr: both classes must be present");
  std::sort(live.begin(), live.end());
  std::sort(spoof.begin(), spoof.end());
  auto at_or_above = [](const std::vector<double>& v, double t) {
    return static_cast<std::size_t>(v.end() - std::lower_bound(v.begin(), v.end(), t));
  };
  const double budget = fdr_target * static_cast<double>(r.n_live) * (1.0 + 1e-12);

  std::vector<double> candidates = s.scores;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  const double above = candidates.empty() ? 0.0 : std::nextafter(candidates.back(), HUGE_VAL);
  candidates.push_back(above);
  // False detects never increase with t: binary search for the first valid one.
  auto valid = [&](double t) { return static_cast<double>(at_or_above(live, t) + gate.live) <= budget; };
  const auto it = std::partition_point(candidates.begin(), candidates.end(), [&](double t) { return !valid(t); });
  r.threshold = it == candidates.end() ? above : *it;
  r.tdr = static_cast<double>(at_or_above(spoof, r.threshold) + gate.spoof) / static_cast<double>(r.n_spoof);
  r.fdr = static_cast<double>(at_or_above(live, r.threshold) + gate.live) / static_cast<double>(r.n_live);
  return r;
}

// ---------------------------------------------------------------- splits

enum class Protocol { Known, Cross };

inline std::string_view to_string(Protocol p) { return p == Protocol::Known ? "known" : "cross"; }

inline Protocol protocol_from_string(std::string_view s) {
  if (s == "known") return Protocol::Known;
  if (s == "cross") return Protocol::Cross;
  throw ConfigError("unknown protocol: " + std::string(s));
}

struct SplitSpec {
  std::string name;
  Protocol protocol = Protocol::Known;
  std::vector<std::string> train;  // manifest sample keys
  std::vector<std::string> test;
  std::vector<std::string> test_subjects;
  std::optional<std::string> held_out_material;
  std::optional<int> fold_index;
};

inline json to_json(const SplitSpec& s) {
  json j{{"name", s.name}, {"protocol", to_string(s.protocol)}, {"train", s.train}, {"test", s.test},
         {"test_subjects", s.test_subjects}};
  if (s.held_out_material) j["held_out_material"] = *s.held_out_material;
  if (s.fold_index) j["fold_index"] = *s.fold_index;
  return j;
}

inline std::string split_hash(const SplitSpec& s) { return sha256_hex(to_json(s).dump()); }

/// Live test subjects per split for a subject count: the full collection's
/// ratio (3 of 15 or 2 of 15) floored, at least one, never all.
inline int scaled_test_subjects(int n_subjects, int per_fifteen) {
  return std::clamp(n_subjects * per_fifteen / 15, 1, std::max(1, n_subjects - 1));
}

namespace detail {

inline std::map<std::string, const SampleRecord*> index_samples(const DatasetManifest& m) {
  std::map<std::string, const SampleRecord*> idx;
  for (const auto& s : m.samples) idx[s.key] = &s;
  return idx;
}

}  // namespace detail

/// Known-material folds: each material's spoof impressions are dealt
/// round-robin over a seeded shuffle, each material continuing where the
/// previous one stopped, so every impression is tested once.  Live data is
/// split by subject.
inline std::vector<SplitSpec> known_material_splits(const DatasetManifest& m, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("known_material_splits: need at least 2 folds");
  auto subjects = m.subjects();
  const int n = static_cast<int>(subjects.size());
  if (n < 2) throw DataError("known_material_splits: need at least 2 live subjects, have " + std::to_string(n));
  const auto materials = m.materials();
  if (materials.empty()) throw DataError("known_material_splits: manifest has no spoofs");

  Rng live_rng(substream_seed(seed, "known-live"));
  live_rng.shuffle(subjects);
  const int per_fold = scaled_test_subjects(n, 3);

  std::map<std::string, int> spoof_fold;
  std::size_t offset = 0;
  for (const auto& mat : materials) {
    std::vector<std::string> keys;
    for (const auto& s : m.samples)
      if (s.label == Label::Spoof && s.material == mat) keys.push_back(s.key);
    if (static_cast<int>(keys.size()) < folds)
      throw DataError("known_material_splits: material '" + mat + "' has " + std::to_string(keys.size()) +
                      " impressions, fewer than " + std::to_string(folds) + " folds");
    std::sort(keys.begin(), keys.end());
    Rng r(substream_seed(seed, "known-spoof/" + mat));
    r.shuffle(keys);
    for (std::size_t p = 0; p < keys.size(); ++p) spoof_fold[keys[p]] = static_cast<int>((offset + p) % folds);
    offset += keys.size();
  }

  std::vector<SplitSpec> out;
  for (int f = 0; f < folds; ++f) {
    SplitSpec sp;
    sp.name = "fold" + std::to_string(f);
    sp.protocol = Protocol::Known;
    sp.fold_index = f;
    std::set<std::string> test_subj;
    for (int k = 0; k < per_fold; ++k) test_subj.insert(subjects[static_cast<std::size_t>((f * per_fold + k) % n)]);
    sp.test_subjects.assign(test_subj.begin(), test_subj.end());
    for (const auto& s : m.samples) {
      const bool test = s.label == Label::Live ? test_subj.count(s.subject) > 0 : spoof_fold.at(s.key) == f;
      (test ? sp.test : sp.train).push_back(s.key);
    }
    out.push_back(std::move(sp));
  }
  return out;
}

/// One split per spoof material, in report order; the held-out material is
/// entirely in test, live test subjects are redrawn per split.
inline std::vector<SplitSpec> cross_material_splits(const DatasetManifest& m, std::uint64_t seed) {
  const auto present = m.materials();
  for (const auto& mat : spoof_material_names())
    if (std::find(present.begin(), present.end(), mat) == present.end())
      throw DataError("cross_material_splits: manifest lacks material '" + mat + "'");
  const auto subjects = m.subjects();
  const int n = static_cast<int>(subjects.size());
  if (n < 2) throw DataError("cross_material_splits: need at least 2 live subjects");
  const int n_test = scaled_test_subjects(n, 2);

  std::vector<SplitSpec> out;
  const auto& order = cross_material_report_order();
  for (std::size_t i = 0; i < order.size(); ++i) {
    SplitSpec sp;
    sp.name = order[i];
    sp.protocol = Protocol::Cross;
    sp.held_out_material = order[i];
    auto shuffled = subjects;
    Rng r(substream_seed(seed, "cross-live", i));
    r.shuffle(shuffled);
    std::set<std::string> test_subj(shuffled.begin(), shuffled.begin() + n_test);
    sp.test_subjects.assign(test_subj.begin(), test_subj.end());
    for (const auto& s : m.samples) {
      const bool test = s.label == Label::Live ? test_subj.count(s.subject) > 0 : s.material == order[i];
      (test ? sp.test : sp.train).push_back(s.key);
    }
    out.push_back(std::move(sp));
  }
  return out;
}

/// Throws DataError describing the first leak found in a split.
inline void check_split(const DatasetManifest& m, const SplitSpec& sp) {
  const auto idx = detail::index_samples(m);
  std::set<std::string> train(sp.train.begin(), sp.train.end());
  if (train.size() != sp.train.size()) throw DataError(sp.name + ": duplicate training entry");
  std::set<std::string> train_subjects;
  for (const auto& k : sp.train) {
    const auto it = idx.find(k);
    if (it == idx.end()) throw DataError(sp.name + ": unknown sample '" + k + "'");
    if (it->second->label == Label::Live) train_subjects.insert(it->second->subject);
    if (sp.held_out_material && it->second->label == Label::Spoof && it->second->material == *sp.held_out_material)
      throw DataError(sp.name + ": held-out material '" + *sp.held_out_material + "' appears in training");
  }
  std::set<std::string> test;
  for (const auto& k : sp.test) {
    if (!test.insert(k).second) throw DataError(sp.name + ": duplicate test entry");
    if (train.count(k)) throw DataError(sp.name + ": sample '" + k + "' in both train and test");
    const auto it = idx.find(k);
    if (it == idx.end()) throw DataError(sp.name + ": unknown sample '" + k + "'");
    if (it->second->label == Label::Live && train_subjects.count(it->second->subject))
      throw DataError(sp.name + ": subject '" + it->second->subject + "' in both train and test");
  }
}

// ---------------------------------------------------------------- methods

enum class Fusion { None, Feature, ScoreMean, ScoreMax };

inline std::string_view to_string(Fusion f) {
  switch (f) {
    case Fusion::None: return "none";
    case Fusion::Feature: return "feature";
    case Fusion::ScoreMean: return "score_mean";
    case Fusion::ScoreMax: return "score_max";
  }
  return "?";
}

inline Fusion fusion_from_string(std::string_view s) {
  if (s == "none") return Fusion::None;
  if (s == "feature") return Fusion::Feature;
  if (s == "score_mean") return Fusion::ScoreMean;
  if (s == "score_max") return Fusion::ScoreMax;
  throw ConfigError("unknown fusion: " + std::string(s));
}

struct MethodSpec {
  std::string name = "fusion-clbp";
  std::vector<View> views{View::Ftir, View::Direct};
  DescriptorKind descriptor = DescriptorKind::Clbp;
  Fusion fusion = Fusion::Feature;
  std::optional<double> c;  // empty: cross-validated selection over c_grid
  std::vector<double> c_grid = default_c_grid();
  int cv_folds = 5;

  void validate() const {
    if (name.empty()) throw ConfigError("method: name required");
    if (views.empty()) throw ConfigError("method '" + name + "': at least one view");
    if (views.size() == 2 && views[0] == views[1]) throw ConfigError("method '" + name + "': repeated view");
    if (views.size() > 2) throw ConfigError("method '" + name + "': at most two views");
    if (descriptor == DescriptorKind::Fused) throw ConfigError("method '" + name + "': descriptor must be lbp or clbp");
    if (views.size() == 1 && fusion != Fusion::None) throw ConfigError("method '" + name + "': fusion needs two views");
    if (views.size() == 2 && fusion == Fusion::None) throw ConfigError("method '" + name + "': two views need a fusion");
    if (c && !(*c > 0)) throw ConfigError("method '" + name + "': C must be positive");
    if (!c && (c_grid.empty() || cv_folds < 2)) throw ConfigError("method '" + name + "': bad C selection settings");
  }

  static MethodSpec single(View v, DescriptorKind k) {
    MethodSpec m;
    m.name = std::string(to_string(v)) + "-" + slug(to_string(k));
    m.views = {v};
    m.descriptor = k;
    m.fusion = Fusion::None;
    return m;
  }
};

/// Built-in methods: "<view>-<kind>" or "fusion-<kind>" with feature
/// fusion, "mean-<kind>" and "max-<kind>" with score fusion.
inline std::optional<MethodSpec> named_method(const std::string& name) {
  const auto dash = name.find('-');
  if (dash == std::string::npos) return std::nullopt;
  const std::string head = name.substr(0, dash), tail = name.substr(dash + 1);
  if (tail != "lbp" && tail != "clbp") return std::nullopt;
  const DescriptorKind kind = descriptor_kind_from_string(tail);
  if (head == "ftir" || head == "direct") return MethodSpec::single(view_from_string(head), kind);
  MethodSpec m;
  m.name = name;
  m.descriptor = kind;
  if (head == "fusion") m.fusion = Fusion::Feature;
  else if (head == "mean") m.fusion = Fusion::ScoreMean;
  else if (head == "max") m.fusion = Fusion::ScoreMax;
  else return std::nullopt;
  return m;
}

inline json to_json(const MethodSpec& m) {
  json views = json::array();
  for (View v : m.views) views.push_back(to_string(v));
  json j{{"name", m.name}, {"views", views}, {"descriptor", slug(to_string(m.descriptor))},
         {"fusion", to_string(m.fusion)}, {"cv_folds", m.cv_folds}, {"c_grid", m.c_grid}};
  if (m.c) j["C"] = *m.c;
  else j["C"] = "select";
  return j;
}

inline MethodSpec method_from_json(const json& j) {
  try {
    MethodSpec m;
    m.name = j.value("name", m.name);
    if (j.contains("views")) {
      m.views.clear();
      for (const auto& v : j.at("views")) m.views.push_back(view_from_string(v.get<std::string>()));
    }
    if (j.contains("descriptor")) m.descriptor = descriptor_kind_from_string(j.at("descriptor").get<std::string>());
    if (j.contains("fusion")) m.fusion = fusion_from_string(j.at("fusion").get<std::string>());
    else if (m.views.size() == 1) m.fusion = Fusion::None;
    if (j.contains("C")) {
      if (j.at("C").is_string()) {
        if (j.at("C").get<std::string>() != "select") throw ConfigError("method: C must be a number or \"select\"");
        m.c.reset();
      } else {
        m.c = j.at("C").get<double>();
      }
    }
    if (j.contains("c_grid")) m.c_grid = j.at("c_grid").get<std::vector<double>>();
    m.cv_folds = j.value("cv_folds", m.cv_folds);
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("method spec: ") + e.what());
  }
}

// ---------------------------------------------------------------- features

/// Preprocessing plus descriptor for one raw RGB view.
inline FeatureVector extract_view_feature(const Image& rgb, View view, DescriptorKind kind, const LbpConfig& cfg = {}) {
  require_color_space(rgb, ColorSpace::Rgb, "extract_view_feature");
  if (kind == DescriptorKind::Lbp) return lbp_descriptor(preprocess_for_lbp(rgb, view), cfg);
  if (kind == DescriptorKind::Clbp) return clbp_descriptor(preprocess_for_clbp(rgb, view), cfg);
  throw ConfigError("extract_view_feature: descriptor must be LBP or CLBP");
}

/// Lazily computed, shared per-sample features and capture decisions for
/// one manifest.  Safe to use from one thread at a time; the computation
/// itself runs on `jobs` workers.
class FeatureStore {
public:
  explicit FeatureStore(const DatasetManifest& m, unsigned jobs = 1, CaptureGateConfig gate = {})
      : m_(m), jobs_(jobs), gate_(gate) {}

  const DatasetManifest& manifest() const { return m_; }

  /// Capture decision on each sample's FTIR view, in manifest order.
  const std::vector<CaptureDecision>& gate_decisions() {
    if (gate_done_) return gates_;
    gates_.resize(m_.samples.size());
    parallel_for(m_.samples.size(), jobs_, [&](std::size_t i) {
      gates_[i] = capture_gate(read_png(m_.file(m_.samples[i], View::Ftir)), gate_);
    });
    gate_done_ = true;
    return gates_;
  }

  struct Entry {
    std::vector<FeatureVector> rows;  // manifest order
    std::vector<double> ms;           // extraction time per sample
  };

  const Entry& features(View v, DescriptorKind k) {
    const auto key = std::make_pair(v, k);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Entry e;
    e.rows.resize(m_.samples.size());
    e.ms.resize(m_.samples.size());
    parallel_for(m_.samples.size(), jobs_, [&](std::size_t i) {
      const Image img = read_png(m_.file(m_.samples[i], v));
      const auto t0 = std::chrono::steady_clock::now();
      e.rows[i] = extract_view_feature(img, v, k);
      e.ms[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    });
    return cache_.emplace(key, std::move(e)).first->second;
  }

  std::size_t index_of(const std::string& key) const {
    if (index_.empty())
      for (std::size_t i = 0; i < m_.samples.size(); ++i) index_[m_.samples[i].key] = i;
    const auto it = index_.find(key);
    if (it == index_.end()) throw DataError("unknown sample '" + key + "'");
    return it->second;
  }

private:
  const DatasetManifest& m_;
  unsigned jobs_;
  CaptureGateConfig gate_;
  bool gate_done_ = false;
  std::vector<CaptureDecision> gates_;
  std::map<std::pair<View, DescriptorKind>, Entry> cache_;
  mutable std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------- protocol

struct ProtocolOptions {
  double fdr_target = 0.01;
  bool perf_log = false;
  SvmTrainOptions svm;
};

struct ReportRow {
  std::string method;
  std::string protocol;
  std::string split;
  std::optional<double> tdr;  // fraction; empty = N/A
  double fdr_target = 0.01;
  std::optional<double> threshold;
  std::size_t n_live_test = 0;
  std::size_t n_spoof_test = 0;
  std::size_t gate_rejected_live = 0;
  std::size_t gate_rejected_spoof = 0;
  std::optional<double> ms_per_sample;
  std::optional<double> selected_c;
  bool converged = true;
  std::string split_hash;
  std::vector<std::string> model_hashes;
  std::string note;
};

struct SplitModels {
  std::string split;
  std::vector<LinearSvmModel> models;  // one per stream (one for feature fusion)
};

struct EvalReport {
  std::uint64_t seed = 0;
  Protocol protocol = Protocol::Known;
  MethodSpec method;
  double fdr_target = 0.01;
  std::vector<SplitSpec> splits;
  std::vector<ReportRow> rows;
  std::vector<SplitModels> models;

  bool all_converged() const {
    return std::all_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.converged; });
  }
  const ReportRow& row(const std::string& split) const {
    for (const auto& r : rows)
      if (r.split == split) return r;
    throw DataError("report has no row '" + split + "'");
  }
};

namespace detail {

/// Feature rows of one model stream for the given samples.
struct Stream {
  DescriptorKind kind;
  std::vector<View> views;  // concatenated in this order
};

inline std::vector<Stream> streams_for(const MethodSpec& m) {
  if (m.fusion == Fusion::Feature) return {{DescriptorKind::Fused, m.views}};
  std::vector<Stream> out;
  for (View v : m.views) out.push_back({m.descriptor, {v}});
  return out;
}

inline FeatureVector stream_feature(FeatureStore& store, const MethodSpec& m, const Stream& s, std::size_t i) {
  FeatureVector fv = store.features(s.views[0], m.descriptor).rows[i];
  for (std::size_t k = 1; k < s.views.size(); ++k) fv = fuse_features(fv, store.features(s.views[k], m.descriptor).rows[i]);
  return fv;
}

inline std::string fmt(double v, const char* f) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

/// Trains and scores every split of a protocol for one method.
inline EvalReport run_protocol(FeatureStore& store, const MethodSpec& method, Protocol protocol, std::uint64_t seed,
                               const ProtocolOptions& opts = {}, int folds = 5) {
  method.validate();
  const DatasetManifest& m = store.manifest();
  EvalReport rep;
  rep.seed = seed;
  rep.protocol = protocol;
  rep.method = method;
  rep.fdr_target = opts.fdr_target;
  rep.splits = protocol == Protocol::Known ? known_material_splits(m, folds, substream_seed(seed, "split"))
                                           : cross_material_splits(m, substream_seed(seed, "split"));
  const auto& gates = store.gate_decisions();
  const auto streams = detail::streams_for(method);
  for (View v : method.views) store.features(v, method.descriptor);

  for (const auto& sp : rep.splits) {
    check_split(m, sp);
    ReportRow row;
    row.method = method.name;
    row.protocol = std::string(to_string(protocol));
    row.split = sp.name;
    row.fdr_target = opts.fdr_target;
    row.split_hash = split_hash(sp);
    const std::uint64_t split_seed = substream_seed(seed, "train/" + sp.name);

    std::vector<std::size_t> train_idx;
    for (const auto& k : sp.train) {
      const std::size_t i = store.index_of(k);
      if (gates[i].accepted) train_idx.push_back(i);
    }
    std::vector<int> y;
    std::vector<std::uint64_t> ids;
    for (std::size_t i : train_idx) {
      y.push_back(label_sign(m.samples[i].label));
      ids.push_back(m.samples[i].id());
    }

    SplitModels sm;
    sm.split = sp.name;
    for (std::size_t s = 0; s < streams.size(); ++s) {
      FeatureRows x;
      for (std::size_t i : train_idx) x.push_back(detail::stream_feature(store, method, streams[s], i).values);
      const std::uint64_t stream_seed = substream_seed(split_seed, "stream", s);
      double c = 0;
      if (method.c) {
        c = *method.c;
      } else {
        c = select_c(x, y, ids, method.c_grid, method.cv_folds, stream_seed, streams[s].kind, opts.svm).best_c;
        row.selected_c = c;
      }
      auto model = train_svm(x, y, c, stream_seed, streams[s].kind, opts.svm);
      row.converged = row.converged && model.converged;
      row.model_hashes.push_back(sha256_hex(model_text(model)));
      sm.models.push_back(std::move(model));
    }

    ScoreSet scores;
    GateCounts gc;
    double ms_total = 0;
    std::size_t scored = 0;
    for (const auto& k : sp.test) {
      const std::size_t i = store.index_of(k);
      const int label = label_sign(m.samples[i].label);
      (label == kSpoof ? row.n_spoof_test : row.n_live_test)++;
      if (!gates[i].accepted) {
        (label == kSpoof ? gc.spoof : gc.live)++;
        continue;
      }
      const auto t0 = std::chrono::steady_clock::now();
      double score;
      if (sm.models.size() == 1) {
        score = decision_score(sm.models[0], detail::stream_feature(store, method, streams[0], i));
      } else {
        std::vector<double> z;
        for (std::size_t s = 0; s < streams.size(); ++s)
          z.push_back(standardize_score(sm.models[s], decision_score(sm.models[s], detail::stream_feature(store, method, streams[s], i))));
        score = fuse_scores(z, method.fusion == Fusion::ScoreMax ? ScoreFusion::Max : ScoreFusion::Mean);
      }
      ms_total += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      for (View v : method.views) ms_total += store.features(v, method.descriptor).ms[i];
      ++scored;
      scores.add(score, label);
    }
    row.gate_rejected_live = gc.live;
    row.gate_rejected_spoof = gc.spoof;
    if (opts.perf_log && scored > 0) row.ms_per_sample = ms_total / static_cast<double>(scored);
    if (row.n_spoof_test == 0 || row.n_live_test == 0) {
      row.note = row.n_spoof_test == 0 ? "no test spoofs" : "no test live samples";
    } else {
      const auto r = tdr_at_fdr(scores, opts.fdr_target, gc);
      row.tdr = r.tdr;
      row.threshold = r.threshold;
    }
    rep.rows.push_back(std::move(row));
    rep.models.push_back(std::move(sm));
  }

  if (protocol == Protocol::Known) {
    std::vector<double> tdrs;
    for (const auto& r : rep.rows)
      if (r.tdr) tdrs.push_back(*r.tdr);
    ReportRow mean, sd;
    mean.method = sd.method = method.name;
    mean.protocol = sd.protocol = "known";
    mean.split = "mean";
    sd.split = "std";
    mean.fdr_target = sd.fdr_target = opts.fdr_target;
    for (const auto& r : rep.rows) {
      mean.n_live_test += r.n_live_test;
      mean.n_spoof_test += r.n_spoof_test;
      mean.converged = mean.converged && r.converged;
    }
    sd.n_live_test = mean.n_live_test;
    sd.n_spoof_test = mean.n_spoof_test;
    sd.converged = mean.converged;
    if (!tdrs.empty()) {
      const double mu = std::accumulate(tdrs.begin(), tdrs.end(), 0.0) / static_cast<double>(tdrs.size());
      double var = 0;
      for (double t : tdrs) var += (t - mu) * (t - mu);
      mean.tdr = mu;
      sd.tdr = std::sqrt(var / static_cast<double>(tdrs.size()));
    }
    rep.rows.push_back(mean);
    rep.rows.push_back(sd);
  }
  return rep;
}

// ---------------------------------------------------------------- report output

inline std::string report_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "method,protocol,split,TDR_pct,FDR_target_pct,threshold,n_live_test,n_spoof_test,ms_per_sample\n";
  for (const auto& rep : reports)
    for (const auto& r : rep.rows) {
      out << r.method << ',' << r.protocol << ",\"" << r.split << "\","
          << (r.tdr ? detail::fmt(100 * *r.tdr, "%.2f") : "NA") << ',' << detail::fmt(100 * r.fdr_target, "%.2f") << ','
          << (r.threshold ? detail::fmt(*r.threshold, "%.9g") : "NA") << ',' << r.n_live_test << ',' << r.n_spoof_test
          << ',' << (r.ms_per_sample ? detail::fmt(*r.ms_per_sample, "%.3f") : "NA") << '\n';
    }
  return out.str();
}

inline std::string report_text(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  for (const auto& rep : reports) {
    out << "method " << rep.method.name << ", " << to_string(rep.protocol) << " protocol, TDR @ FDR = "
        << detail::fmt(100 * rep.fdr_target, "%.1f") << "%\n";
    char line[256];
    std::snprintf(line, sizeof line, "  %-26s %9s %12s %6s %7s %6s %9s\n", "split", "TDR(%)", "threshold", "live",
                  "spoof", "gated", "ms/sample");
    out << line;
    for (const auto& r : rep.rows) {
      std::snprintf(line, sizeof line, "  %-26s %9s %12s %6zu %7zu %6zu %9s\n", r.split.c_str(),
                    r.tdr ? detail::fmt(100 * *r.tdr, "%.2f").c_str() : "N/A",
                    r.threshold ? detail::fmt(*r.threshold, "%.4g").c_str() : "-", r.n_live_test, r.n_spoof_test,
                    r.gate_rejected_live + r.gate_rejected_spoof,
                    r.ms_per_sample ? detail::fmt(*r.ms_per_sample, "%.2f").c_str() : "NA");
      out << line;
    }
    if (rep.protocol == Protocol::Known) {
      const auto& mu = rep.row("mean");
      const auto& sd = rep.row("std");
      if (mu.tdr && sd.tdr)
        out << "  mu +- sigma: " << detail::fmt(100 * *mu.tdr, "%.2f") << " +- " << detail::fmt(100 * *sd.tdr, "%.2f")
            << "\n";
    }
    out << "\n";
  }
  return out.str();
}

inline json to_json(const EvalReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    json j{{"method", r.method},
           {"protocol", r.protocol},
           {"split", r.split},
           {"TDR", r.tdr ? json(*r.tdr) : json(nullptr)},
           {"FDR_target", r.fdr_target},
           {"threshold", r.threshold ? json(*r.threshold) : json(nullptr)},
           {"n_live_test", r.n_live_test},
           {"n_spoof_test", r.n_spoof_test},
           {"gate_rejected_live", r.gate_rejected_live},
           {"gate_rejected_spoof", r.gate_rejected_spoof},
           {"ms_per_sample", r.ms_per_sample ? json(*r.ms_per_sample) : json(nullptr)},
           {"converged", r.converged}};
    if (r.selected_c) j["selected_C"] = *r.selected_c;
    if (!r.split_hash.empty()) j["split_sha256"] = r.split_hash;
    if (!r.model_hashes.empty()) j["model_sha256"] = r.model_hashes;
    if (!r.note.empty()) j["note"] = r.note;
    rows.push_back(j);
  }
  json splits = json::array();
  for (const auto& s : rep.splits) splits.push_back(to_json(s));
  return {{"format_version", 1},
          {"seed", rep.seed},
          {"protocol", to_string(rep.protocol)},
          {"method", to_json(rep.method)},
          {"FDR_target", rep.fdr_target},
          {"live_test_subjects", rep.protocol == Protocol::Cross ? "redrawn per split from the split-indexed seed"
                                                                 : "rotated through a seeded subject order per fold"},
          {"capture_gate", "rejected spoofs count as detected, rejected live as false detects"},
          {"rows", rows},
          {"splits", splits}};
}

}  // namespace ftirpad

#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "ftirpad/evaluation.hpp"
#include "reference.hpp"

using namespace ftirpad;

namespace {

ScoreSet random_scores(std::uint64_t seed, int n_live, int n_spoof, bool coarse) {
  Rng rng(seed);
  ScoreSet s;
  auto draw = [&](double mu) { return coarse ? std::round(4 * (mu + rng.normal())) / 4 : mu + rng.normal(); };
  for (int i = 0; i < n_live; ++i) s.add(draw(0.0), kLive);
  for (int i = 0; i < n_spoof; ++i) s.add(draw(1.5), kSpoof);
  return s;
}

/// A manifest dataset rendered once and shared by the protocol tests.
class RenderedDataset : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    dir_ = new ref::TempDir("eval");
    manifest_ = new DatasetManifest(generate_dataset(fixtures::hue_disjoint(), 17, dir_->path()));
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete dir_;
  }
  static ref::TempDir* dir_;
  static DatasetManifest* manifest_;
};

ref::TempDir* RenderedDataset::dir_ = nullptr;
DatasetManifest* RenderedDataset::manifest_ = nullptr;

std::size_t live_count(const DatasetManifest& m, const std::vector<std::string>& keys) {
  std::size_t n = 0;
  for (const auto& k : keys)
    for (const auto& s : m.samples)
      if (s.key == k && s.label == Label::Live) ++n;
  return n;
}

}  // namespace

TEST(TdrAtFdr, SeparatedScoresDetectEverything) {
  ScoreSet s;
  for (double v : {-3.0, -2.0, -1.0}) s.add(v, kLive);
  for (double v : {1.0, 2.0}) s.add(v, kSpoof);
  const auto r = tdr_at_fdr(s);
  EXPECT_EQ(r.tdr, 1.0);
  EXPECT_EQ(r.threshold, 1.0);
  EXPECT_EQ(r.fdr, 0.0);
}

TEST(TdrAtFdr, IdenticalScoresDetectNothing) {
  ScoreSet s;
  for (int i = 0; i < 10; ++i) s.add(0.5, i % 2 ? kSpoof : kLive);
  const auto r = tdr_at_fdr(s);
  EXPECT_EQ(r.tdr, 0.0);
  EXPECT_GT(r.threshold, 0.5);
}

TEST(TdrAtFdr, BudgetAllowsOneFalseDetectPerHundred) {
  ScoreSet s;
  for (int i = 0; i < 100; ++i) s.add(i == 0 ? 5.0 : -1.0, kLive);
  for (int i = 0; i < 10; ++i) s.add(i < 3 ? 0.0 : 4.0, kSpoof);
  const auto r = tdr_at_fdr(s);
  EXPECT_DOUBLE_EQ(r.tdr, 1.0);
  EXPECT_DOUBLE_EQ(r.fdr, 0.01);
}

TEST(TdrAtFdr, Errors) {
  ScoreSet live_only;
  live_only.add(1, kLive);
  EXPECT_THROW(tdr_at_fdr(live_only), DataError);
  ScoreSet nan;
  nan.add(std::nan(""), kLive);
  nan.add(1, kSpoof);
  EXPECT_THROW(tdr_at_fdr(nan), DataError);
  EXPECT_THROW(tdr_at_fdr(random_scores(1, 5, 5, false), 1.5), ConfigError);
}

TEST(TdrAtFdr, MatchesExhaustiveSweep) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = random_scores(seed, 1000, 1000, seed % 2 == 0);
    const auto got = tdr_at_fdr(s);
    const auto want = ref::sweep_tdr(s.scores, s.labels, 0.01);
    EXPECT_EQ(got.tdr, want.tdr) << "seed " << seed;
    if (want.threshold) EXPECT_EQ(got.threshold, *want.threshold);
  }
}

TEST(TdrAtFdr, InvariantUnderIncreasingTransforms) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = random_scores(seed, 300, 200, seed % 3 == 0);
    const auto base = tdr_at_fdr(s);
    for (auto f : std::vector<std::function<double(double)>>{[](double v) { return std::exp(v); },
                                                             [](double v) { return 3 * v - 7; },
                                                             [](double v) { return std::atan(v); }}) {
      ScoreSet t = s;
      for (double& v : t.scores) v = f(v);
      EXPECT_EQ(tdr_at_fdr(t).tdr, base.tdr);
    }
  }
}

TEST(TdrAtFdr, GateRejectedSpoofsNeverLowerTdr) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = random_scores(seed, 200, 100, false);
    const double without = tdr_at_fdr(s).tdr;
    for (std::size_t g : {1u, 5u, 40u}) EXPECT_GE(tdr_at_fdr(s, 0.01, {0, g}).tdr, without);
  }
}

TEST(ScaledSubjects, RatioRule) {
  EXPECT_EQ(scaled_test_subjects(15, 3), 3);
  EXPECT_EQ(scaled_test_subjects(15, 2), 2);
  EXPECT_EQ(scaled_test_subjects(4, 3), 1);
  EXPECT_EQ(scaled_test_subjects(2, 2), 1);
  EXPECT_EQ(scaled_test_subjects(30, 3), 6);
}

TEST(KnownSplits, FullScaleFoldShape) {
  const auto m = plan_dataset(DatasetConfig::full(), 1);
  const auto splits = known_material_splits(m, 5, 7);
  ASSERT_EQ(splits.size(), 5u);
  for (const auto& sp : splits) {
    EXPECT_EQ(live_count(m, sp.train), 600u) << sp.name;
    EXPECT_EQ(sp.test_subjects.size(), 3u);
    EXPECT_NO_THROW(check_split(m, sp));
  }
}

TEST(KnownSplits, DeskScaleSubjects) {
  const auto m = plan_dataset(DatasetConfig::desk(), 2);
  for (const auto& sp : known_material_splits(m, 5, 3)) {
    EXPECT_EQ(sp.test_subjects.size(), 1u);
    std::set<std::string> train_subjects;
    for (const auto& k : sp.train)
      for (const auto& s : m.samples)
        if (s.key == k && s.label == Label::Live) train_subjects.insert(s.subject);
    EXPECT_EQ(train_subjects.size(), 3u);
    EXPECT_NO_THROW(check_split(m, sp));
  }
}

TEST(KnownSplits, EverySpoofTestedExactlyOnce) {
  for (const auto& cfg : {DatasetConfig::full(), DatasetConfig::desk()}) {
    const auto m = plan_dataset(cfg, 4);
    std::map<std::string, int> tested;
    for (const auto& sp : known_material_splits(m, 5, 9))
      for (const auto& k : sp.test) ++tested[k];
    for (const auto& s : m.samples)
      if (s.label == Label::Spoof) EXPECT_EQ(tested[s.key], 1) << s.key;
  }
}

TEST(KnownSplits, FullScaleTrainsOnFourFifthsOfEachMaterial) {
  const auto m = plan_dataset(DatasetConfig::full(), 1);
  for (const auto& sp : known_material_splits(m, 5, 7)) {
    std::map<std::string, int> train, total;
    for (const auto& s : m.samples)
      if (s.label == Label::Spoof) ++total[s.material];
    for (const auto& k : sp.train)
      for (const auto& s : m.samples)
        if (s.key == k && s.label == Label::Spoof) ++train[s.material];
    for (const auto& [mat, n] : total) EXPECT_EQ(train[mat] * 5, n * 4) << sp.name << " " << mat;
  }
}

TEST(KnownSplits, Preconditions) {
  auto cfg = DatasetConfig::desk();
  cfg.live.subjects = 1;
  EXPECT_THROW(known_material_splits(plan_dataset(cfg, 1), 5, 1), DataError);
  cfg = DatasetConfig::desk();
  cfg.materials[0].instances = 1;
  cfg.materials[0].impressions = 4;
  EXPECT_THROW(known_material_splits(plan_dataset(cfg, 1), 5, 1), DataError);
  EXPECT_THROW(known_material_splits(plan_dataset(DatasetConfig::desk(), 1), 1, 1), ConfigError);
}

TEST(CrossSplits, SevenSplitsInReportOrder) {
  const auto m = plan_dataset(DatasetConfig::full(), 5);
  const auto splits = cross_material_splits(m, 11);
  ASSERT_EQ(splits.size(), 7u);
  for (std::size_t i = 0; i < splits.size(); ++i) {
    const auto& sp = splits[i];
    EXPECT_EQ(sp.name, cross_material_report_order()[i]);
    EXPECT_EQ(live_count(m, sp.test), 100u);
    for (const auto& k : sp.train)
      for (const auto& s : m.samples)
        if (s.key == k) EXPECT_NE(s.material, *sp.held_out_material);
    EXPECT_NO_THROW(check_split(m, sp));
  }
  const auto& eco = *std::find_if(splits.begin(), splits.end(), [](const SplitSpec& s) { return s.name == "Ecoflex"; });
  for (const auto& k : eco.train) EXPECT_EQ(k.find("spoof/ecoflex/"), std::string::npos) << k;
}

TEST(CrossSplits, RequiresAllMaterials) {
  auto cfg = DatasetConfig::desk();
  cfg.materials.pop_back();
  EXPECT_THROW(cross_material_splits(plan_dataset(cfg, 1), 1), DataError);
}

TEST(CheckSplit, DetectsLeaks) {
  const auto m = plan_dataset(DatasetConfig::desk(), 1);
  auto sp = known_material_splits(m, 5, 1)[0];
  auto overlap = sp;
  overlap.train.push_back(overlap.test.front());
  EXPECT_THROW(check_split(m, overlap), DataError);

  auto subject_leak = sp;
  for (auto it = subject_leak.test.begin(); it != subject_leak.test.end(); ++it)
    if (it->rfind("live/", 0) == 0) {
      // Move one impression of a test subject into training.
      subject_leak.train.push_back(*it);
      subject_leak.test.erase(it);
      break;
    }
  EXPECT_THROW(check_split(m, subject_leak), DataError);

  auto cross = cross_material_splits(m, 1)[1];
  for (auto it = cross.test.begin(); it != cross.test.end(); ++it)
    if (it->rfind("spoof/", 0) == 0) {
      cross.train.push_back(*it);
      cross.test.erase(it);
      break;
    }
  EXPECT_THROW(check_split(m, cross), DataError);
}

TEST(MethodSpec, JsonAndNames) {
  const auto m = method_from_json(json{{"name", "x"}, {"views", {"ftir"}}, {"descriptor", "lbp"}, {"C", 10}});
  EXPECT_EQ(m.fusion, Fusion::None);
  EXPECT_EQ(*m.c, 10);
  const auto back = method_from_json(to_json(m));
  EXPECT_EQ(to_json(back), to_json(m));
  EXPECT_THROW(method_from_json(json{{"views", {"ftir", "ftir"}}}), ConfigError);
  EXPECT_THROW(method_from_json(json{{"C", "sometimes"}}), ConfigError);
  EXPECT_EQ(named_method("direct-lbp")->views, std::vector<View>{View::Direct});
  EXPECT_EQ(named_method("max-clbp")->fusion, Fusion::ScoreMax);
  EXPECT_FALSE(named_method("fusion-sift"));
}

TEST_F(RenderedDataset, HueDisjointSpoofsFullyDetected) {
  // The direct-view hue of the finger (saturated pixels) separates the classes.
  int live_max = 0, spoof_min = 255;
  for (const auto& s : manifest_->samples) {
    const Image hsv = rgb_to_hsv(read_png(manifest_->file(s, View::Direct)));
    std::array<int, 256> hist{};
    for (std::size_t i = 0; i < hsv.pixel_count(); ++i)
      if (hsv.data()[3 * i + 1] >= 60) ++hist[hsv.data()[3 * i]];
    int mode = 0;
    for (int h = 1; h < 256; ++h)
      if (hist[h] > hist[mode]) mode = h;
    if (s.label == Label::Live) live_max = std::max(live_max, mode);
    else spoof_min = std::min(spoof_min, mode);
  }
  ASSERT_LT(live_max, spoof_min);

  FeatureStore store(*manifest_);
  const auto rep = run_protocol(store, MethodSpec{}, Protocol::Known, 3);
  for (const auto& r : rep.rows)
    if (r.split != "std") EXPECT_EQ(r.tdr, 1.0) << r.split;
}

TEST_F(RenderedDataset, ReportsAreDeterministicAndConsistent) {
  FeatureStore a(*manifest_), b(*manifest_, 2);
  const MethodSpec method = MethodSpec::single(View::Direct, DescriptorKind::Lbp);
  const auto ra = run_protocol(a, method, Protocol::Known, 9);
  const auto rb = run_protocol(b, method, Protocol::Known, 9);
  EXPECT_EQ(to_json(ra).dump(), to_json(rb).dump());
  EXPECT_EQ(report_csv({ra}), report_csv({rb}));

  // Rows fold0..fold4, mean, std; mean is the arithmetic mean.
  ASSERT_EQ(ra.rows.size(), 7u);
  double sum = 0;
  for (int f = 0; f < 5; ++f) sum += *ra.row("fold" + std::to_string(f)).tdr;
  EXPECT_NEAR(*ra.row("mean").tdr, sum / 5, 1e-12);
  for (const auto& r : ra.rows) {
    EXPECT_FALSE(r.ms_per_sample);
    if (r.split.rfind("fold", 0) == 0) {
      EXPECT_EQ(r.split_hash.size(), 64u);
      EXPECT_EQ(r.model_hashes.size(), 1u);
    }
  }
  const std::string csv = report_csv({ra});
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "method,protocol,split,TDR_pct,FDR_target_pct,threshold,n_live_test,n_spoof_test,ms_per_sample");
}

TEST_F(RenderedDataset, ScoreFusionStreamsAndTiming) {
  FeatureStore store(*manifest_);
  MethodSpec method = *named_method("mean-lbp");
  method.c = 1.0;
  ProtocolOptions opts;
  opts.perf_log = true;
  const auto rep = run_protocol(store, method, Protocol::Known, 2, opts);
  EXPECT_EQ(rep.models.front().models.size(), 2u);
  EXPECT_TRUE(rep.row("fold0").ms_per_sample.has_value());
  EXPECT_FALSE(rep.row("fold0").selected_c.has_value());
}

TEST_F(RenderedDataset, CrossProtocolNeedsAllMaterials) {
  FeatureStore store(*manifest_);
  EXPECT_THROW(run_protocol(store, MethodSpec{}, Protocol::Cross, 1), DataError);
}

TEST(RunProtocol, GateRejectedSpoofsCountAsDetected) {
  ref::TempDir dir("eval-gate");
  auto cfg = fixtures::hue_disjoint();
  cfg.materials.push_back({material_preset(kAbsorptiveMaterial), 2, 3});
  const auto m = generate_dataset(cfg, 8, dir.path());
  FeatureStore store(m);
  MethodSpec method = MethodSpec::single(View::Ftir, DescriptorKind::Lbp);
  method.c = 1.0;
  const auto rep = run_protocol(store, method, Protocol::Known, 1);
  std::size_t gated = 0;
  for (const auto& r : rep.rows)
    if (r.split.rfind("fold", 0) == 0) {
      gated += r.gate_rejected_spoof;
      EXPECT_EQ(r.gate_rejected_live, 0u);
    }
  EXPECT_EQ(gated, 6u);
}

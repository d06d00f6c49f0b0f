#include <gtest/gtest.h>

#include "ftirpad/svm.hpp"
#include "reference.hpp"

using namespace ftirpad;

namespace {

ref::LabeledSet separable(std::uint64_t seed, int per_class = 15, double gap = 2.0) {
  Rng rng(seed);
  ref::LabeledSet s;
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i % 2 ? kSpoof : kLive;
    s.x.push_back({label * gap + rng.uniform(-0.5, 0.5), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    s.y.push_back(label);
  }
  return s;
}

std::vector<std::uint64_t> ids_for(std::size_t n) {
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = fnv1a64("sample/" + std::to_string(i));
  return ids;
}

}  // namespace

TEST(TrainSvm, SeparablePairHasZeroHinge) {
  FeatureRows x{{-1, 0}, {-1, 0}, {1, 0}, {1, 0}};
  std::vector<int> y{kLive, kLive, kSpoof, kSpoof};
  const auto m = train_svm(x, y, 10.0, 1);
  EXPECT_TRUE(m.converged);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = decision_score(m, std::span<const double>(x[i]));
    EXPECT_GE(y[i] * s, 1.0 - 1e-9);
  }
  EXPECT_NEAR(m.weights[0], 1.0, 1e-9);
  EXPECT_NEAR(m.bias, 0.0, 1e-9);
}

TEST(TrainSvm, SeparableCloudsHaveZeroHinge) {
  const auto s = separable(3);
  const auto m = train_svm(s.x, s.y, 100.0, 2);
  double hinge = 0;
  for (std::size_t i = 0; i < s.x.size(); ++i)
    hinge += std::max(0.0, 1 - s.y[i] * decision_score(m, std::span<const double>(s.x[i])));
  EXPECT_LE(hinge, 1e-6);
}

TEST(TrainSvm, LabelFlipNegatesModelExactly) {
  for (std::uint64_t seed : {1u, 7u, 99u}) {
    const auto s = ref::forty_point_set(seed);
    std::vector<int> flipped = s.y;
    for (int& v : flipped) v = -v;
    const auto a = train_svm(s.x, s.y, 1.0, seed), b = train_svm(s.x, flipped, 1.0, seed);
    ASSERT_EQ(a.weights.size(), b.weights.size());
    for (std::size_t k = 0; k < a.weights.size(); ++k) EXPECT_EQ(a.weights[k], -b.weights[k]);
    EXPECT_EQ(a.bias, -b.bias);
    EXPECT_EQ(a.objective_value, b.objective_value);
  }
}

TEST(TrainSvm, MatchesSlowSubgradientOracle) {
  const auto s = ref::forty_point_set();
  const auto m = train_svm(s.x, s.y, 1.0, 5);
  const double smo = svm_primal_objective(s.x, s.y, m.weights, m.bias, 1.0);
  EXPECT_NEAR(smo, m.objective_value, 1e-9 * smo);
  const double oracle = ref::subgradient_svm_objective(s.x, s.y, 1.0, 1'000'000);
  EXPECT_LE(std::abs(smo - oracle) / oracle, 1e-4) << "smo " << smo << " oracle " << oracle;
  EXPECT_LE(smo, oracle * (1 + 1e-12));
}

TEST(TrainSvm, OptimumBeatsPerturbations) {
  const auto s = ref::forty_point_set(11);
  for (double c : {0.01, 1.0, 100.0}) {
    const auto m = train_svm(s.x, s.y, c, 1);
    const double best = svm_primal_objective(s.x, s.y, m.weights, m.bias, c);
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> w = m.weights;
      for (double& v : w) v += 1e-3 * rng.normal();
      EXPECT_GE(svm_primal_objective(s.x, s.y, w, m.bias + 1e-3 * rng.normal(), c), best - 1e-9 * best);
    }
  }
}

TEST(DecisionScore, AffineInFeatures) {
  const auto s = ref::forty_point_set();
  const auto m = train_svm(s.x, s.y, 1.0, 1);
  const std::vector<double> zero{0, 0}, a{0.3, -1.2}, b{2.5, 0.7}, sum{2.8, -0.5};
  EXPECT_EQ(decision_score(m, std::span<const double>(zero)), m.bias);
  EXPECT_NEAR(decision_score(m, std::span<const double>(sum)),
              decision_score(m, std::span<const double>(a)) + decision_score(m, std::span<const double>(b)) - m.bias, 1e-12);
  const std::vector<double> wrong{1, 2, 3};
  EXPECT_THROW(decision_score(m, std::span<const double>(wrong)), DataError);
  FeatureVector fv;
  fv.kind = DescriptorKind::Clbp;
  fv.values = a;
  EXPECT_THROW(decision_score(m, fv), DataError);
}

TEST(TrainSvm, ScalingKeepsTrainingSignsOnSeparableData) {
  const auto s = separable(9);
  for (double alpha : {0.01, 0.5, 3.0, 40.0}) {
    FeatureRows scaled = s.x;
    for (auto& row : scaled)
      for (double& v : row) v *= alpha;
    const auto m = train_svm(scaled, s.y, 1e4, 4);
    for (std::size_t i = 0; i < scaled.size(); ++i)
      EXPECT_EQ(decision_score(m, std::span<const double>(scaled[i])) > 0, s.y[i] > 0) << "alpha " << alpha;
  }
}

TEST(TrainSvm, Deterministic) {
  const auto s = ref::forty_point_set(2);
  const auto a = train_svm(s.x, s.y, 1.0, 8), b = train_svm(s.x, s.y, 1.0, 8);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(TrainSvm, Errors) {
  FeatureRows x{{0}, {1}, {2}, {3}};
  EXPECT_THROW(train_svm(x, std::vector<int>{1, 1, 1, 1}, 1.0, 0), DataError);
  EXPECT_THROW(train_svm(x, std::vector<int>{1, -1, -1, -1}, 1.0, 0), DataError);
  EXPECT_THROW(train_svm(x, std::vector<int>{1, 1, -1, -1}, 0.0, 0), ConfigError);
  EXPECT_THROW(train_svm(x, std::vector<int>{1, 1, -1}, 1.0, 0), DataError);
  FeatureRows bad = x;
  bad[2][0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(train_svm(bad, std::vector<int>{1, 1, -1, -1}, 1.0, 0), DataError);
  EXPECT_THROW(train_svm(x, std::vector<int>{1, 2, -1, -1}, 1.0, 0), DataError);
}

TEST(TrainSvm, IterationCapReportsNonConvergence) {
  const auto s = ref::forty_point_set();
  SvmTrainOptions opts;
  opts.max_iterations = 2;
  const auto m = train_svm(s.x, s.y, 1.0, 1, DescriptorKind::Lbp, opts);
  EXPECT_FALSE(m.converged);
  EXPECT_LE(m.iterations, 2u);
}

TEST(SelectC, DefaultGrid) {
  const auto g = default_c_grid();
  ASSERT_EQ(g.size(), 11u);
  EXPECT_DOUBLE_EQ(g.front(), 1e-5);
  EXPECT_DOUBLE_EQ(g.back(), 1e5);
  EXPECT_DOUBLE_EQ(g[7], 100.0);
}

TEST(SelectC, SingleValueGridReturnsIt) {
  const auto s = ref::forty_point_set();
  const auto ids = ids_for(s.x.size());
  const auto sel = select_c(s.x, s.y, ids, {0.3}, 5, 1);
  EXPECT_EQ(sel.best_c, 0.3);
  EXPECT_EQ(sel.fold_accuracy.size(), 1u);
  EXPECT_EQ(sel.fold_accuracy[0].size(), 5u);
}

TEST(SelectC, PicksAccurateValueAndBreaksTiesLow) {
  const auto s = separable(5, 20);
  const auto ids = ids_for(s.x.size());
  const auto sel = select_c(s.x, s.y, ids, default_c_grid(), 5, 1);
  const double best = *std::max_element(sel.mean_accuracy.begin(), sel.mean_accuracy.end());
  EXPECT_EQ(best, 1.0);
  std::size_t first = 0;
  while (sel.mean_accuracy[first] < best) ++first;
  EXPECT_EQ(sel.best_c, sel.grid[first]);
}

TEST(SelectC, InvariantToSampleOrder) {
  const auto s = ref::forty_point_set(6);
  const auto ids = ids_for(s.x.size());
  const auto a = select_c(s.x, s.y, ids, default_c_grid(), 5, 3);
  std::vector<std::size_t> perm(s.x.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(1);
  rng.shuffle(perm);
  FeatureRows x;
  std::vector<int> y;
  std::vector<std::uint64_t> pid;
  for (auto i : perm) {
    x.push_back(s.x[i]);
    y.push_back(s.y[i]);
    pid.push_back(ids[i]);
  }
  const auto b = select_c(x, y, pid, default_c_grid(), 5, 3);
  EXPECT_EQ(a.best_c, b.best_c);
  EXPECT_EQ(a.fold_accuracy, b.fold_accuracy);
}

TEST(SelectC, Errors) {
  const auto s = ref::forty_point_set();
  const auto ids = ids_for(s.x.size());
  EXPECT_THROW(select_c(s.x, s.y, ids, {}, 5, 1), ConfigError);
  auto dup = ids;
  dup[3] = dup[4];
  EXPECT_THROW(select_c(s.x, s.y, dup, {1.0}, 5, 1), DataError);
  FeatureRows few{{0}, {1}, {2}, {3}, {4}, {5}};
  EXPECT_THROW(select_c(few, std::vector<int>{1, 1, 1, -1, -1, -1}, ids_for(6), {1.0}, 5, 1), DataError);
}

TEST(FuseScores, Examples) {
  const std::vector<double> a{1, 3}, b{-5, 0.2}, one{0.7};
  EXPECT_DOUBLE_EQ(fuse_scores(a, ScoreFusion::Mean), 2.0);
  EXPECT_DOUBLE_EQ(fuse_scores(b, ScoreFusion::Max), 0.2);
  EXPECT_DOUBLE_EQ(fuse_scores(one, ScoreFusion::Mean), 0.7);
  EXPECT_DOUBLE_EQ(fuse_scores(one, ScoreFusion::Max), 0.7);
  EXPECT_THROW(fuse_scores(std::vector<double>{}, ScoreFusion::Mean), DataError);
}

TEST(FuseScores, MeanSymmetricMaxMonotone) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const double u = rng.normal(), v = rng.normal(), d = rng.uniform(0, 2);
    const std::vector<double> uv{u, v}, vu{v, u}, up{u + d, v};
    EXPECT_EQ(fuse_scores(uv, ScoreFusion::Mean), fuse_scores(vu, ScoreFusion::Mean));
    EXPECT_GE(fuse_scores(up, ScoreFusion::Max), fuse_scores(uv, ScoreFusion::Max));
  }
}

TEST(Standardize, UsesTrainingStatistics) {
  const auto s = ref::forty_point_set();
  const auto m = train_svm(s.x, s.y, 1.0, 1);
  double mean = 0;
  std::vector<double> z;
  for (const auto& row : s.x) z.push_back(standardize_score(m, decision_score(m, std::span<const double>(row))));
  for (double v : z) mean += v / z.size();
  double var = 0;
  for (double v : z) var += (v - mean) * (v - mean) / z.size();
  EXPECT_NEAR(mean, 0, 1e-9);
  EXPECT_NEAR(var, 1, 1e-9);
}

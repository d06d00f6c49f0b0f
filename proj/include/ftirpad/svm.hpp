#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ftirpad/error.hpp"
#include "ftirpad/lbp.hpp"
#include "ftirpad/rng.hpp"

namespace ftirpad {

/// Class convention: spoof = +1 (the class a detector "detects"), live = -1.
inline constexpr int kSpoof = +1;
inline constexpr int kLive = -1;

using FeatureRows = std::vector<std::vector<double>>;

struct LinearSvmModel {
  std::vector<double> weights;
  double bias = 0.0;
  double C = 1.0;
  DescriptorKind feature_kind = DescriptorKind::Lbp;
  std::uint64_t train_seed = 0;
  double objective_value = 0.0;
  bool converged = true;
  std::uint64_t iterations = 0;
  double train_score_mean = 0.0;
  double train_score_std = 1.0;

  std::size_t dim() const { return weights.size(); }
};

struct SvmTrainOptions {
  double kkt_tolerance = 1e-6;            // maximal-violating-pair gap
  double relative_decrease_tol = 1e-8;    // dual objective change over one pass
  std::uint64_t max_iterations = 20'000'000;
};

/// (1/2)|w|^2 + C * sum max(0, 1 - y (w.x + b)).
inline double svm_primal_objective(const FeatureRows& x, std::span<const int> y, std::span<const double> w, double b,
                                   double c) {
  double reg = 0.0;
  for (double v : w) reg += v * v;
  double hinge = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double s = b;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * x[i][k];
    hinge += std::max(0.0, 1.0 - y[i] * s);
  }
  return 0.5 * reg + c * hinge;
}

namespace detail {

struct DualSolution {
  std::vector<double> alpha;
  double rho = 0.0;  // decision = sum alpha_i y_i K(x_i, x) - rho
  bool converged = true;
  std::uint64_t iterations = 0;
};

/// SMO with second-order working-set selection on the dual
///   min 1/2 a'Qa - e'a,  0 <= a <= C,  y'a = 0,  Q_ij = y_i y_j K_ij.
/// `order` fixes the scan order, which decides ties between equally
/// violating candidates.
inline DualSolution solve_dual(const Eigen::MatrixXd& kernel, std::span<const int> y, double c,
                               std::span<const std::size_t> order, const SvmTrainOptions& opts) {
  const auto n = static_cast<std::size_t>(kernel.rows());
  constexpr double tau = 1e-12;
  DualSolution sol;
  sol.alpha.assign(n, 0.0);
  std::vector<double> grad(n, -1.0);
  auto& alpha = sol.alpha;
  auto in_up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < c) || (y[t] == -1 && alpha[t] > 0); };
  auto in_low = [&](std::size_t t) { return (y[t] == 1 && alpha[t] > 0) || (y[t] == -1 && alpha[t] < c); };
  auto dual_obj = [&] {
    double o = 0;
    for (std::size_t t = 0; t < n; ++t) o += alpha[t] * (grad[t] - 1.0);
    return 0.5 * o;
  };

  double last_pass_obj = 0.0;
  std::uint64_t iter = 0;
  sol.converged = false;
  while (iter < opts.max_iterations) {
    // i: maximal violator in I_up.
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t : order) {
      if (in_up(t) && -y[t] * grad[t] > gmax) {
        gmax = -y[t] * grad[t];
        i = t;
      }
    }
    // j: second-order choice in I_low; also track the gap.
    double gmin = std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t : order) {
      if (!in_low(t)) continue;
      const double v = -y[t] * grad[t];
      gmin = std::min(gmin, v);
      if (i == n) continue;
      const double b = gmax - v;
      if (b > 0) {
        double a = kernel(i, i) + kernel(t, t) - 2.0 * kernel(i, t);
        if (a <= 0) a = tau;
        const double score = -(b * b) / a;
        if (score < best) {
          best = score;
          j = t;
        }
      }
    }
    if (i == n || j == n || gmax - gmin < opts.kkt_tolerance) {
      sol.converged = true;
      break;
    }

    // Two-variable subproblem along the feasible direction (libsvm update).
    const double qij = y[i] * y[j] * kernel(i, j);
    const double old_ai = alpha[i], old_aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = kernel(i, i) + kernel(j, j) + 2.0 * qij;
      if (quad <= 0) quad = tau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) alpha[j] = 0, alpha[i] = diff;
      } else {
        if (alpha[i] < 0) alpha[i] = 0, alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > c) alpha[i] = c, alpha[j] = c - diff;
      } else {
        if (alpha[j] > c) alpha[j] = c, alpha[i] = c + diff;
      }
    } else {
      double quad = kernel(i, i) + kernel(j, j) - 2.0 * qij;
      if (quad <= 0) quad = tau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) alpha[i] = c, alpha[j] = sum - c;
      } else {
        if (alpha[j] < 0) alpha[j] = 0, alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) alpha[j] = c, alpha[i] = sum - c;
      } else {
        if (alpha[i] < 0) alpha[i] = 0, alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t)
      grad[t] += y[t] * (y[i] * kernel(t, i) * dai + y[j] * kernel(t, j) * daj);

    ++iter;
    if (iter % n == 0) {
      const double obj = dual_obj();
      if (iter > n && std::abs(last_pass_obj - obj) < opts.relative_decrease_tol * std::abs(obj)) {
        sol.converged = true;
        break;
      }
      last_pass_obj = obj;
    }
  }
  sol.iterations = iter;

  // rho: mean of y_t G_t over free variables, else midpoint of the bounds.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= c) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  sol.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2;
  return sol;
}

inline void check_training_set(const FeatureRows& x, std::span<const int> y, double c) {
  if (!(c > 0) || !std::isfinite(c)) throw ConfigError("train_svm: C must be positive and finite");
  if (x.size() != y.size()) throw DataError("train_svm: feature/label count mismatch");
  if (x.empty()) throw DataError("train_svm: empty training set");
  const std::size_t d = x.front().size();
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != d) throw DataError("train_svm: inconsistent feature dimensions");
    for (double v : x[i])
      if (!std::isfinite(v)) throw DataError("train_svm: non-finite feature value");
    if (y[i] == kSpoof) ++pos;
    else if (y[i] == kLive) ++neg;
    else throw DataError("train_svm: labels must be +1 (spoof) or -1 (live)");
  }
  if (pos == 0 || neg == 0) throw DataError("train_svm: single-class training data");
  if (pos < 2 || neg < 2) throw DataError("train_svm: need at least two samples per class");
}

inline Eigen::MatrixXd to_matrix(const FeatureRows& x) {
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto d = static_cast<Eigen::Index>(x.empty() ? 0 : x.front().size());
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d; ++k) m(i, k) = x[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  return m;
}

/// Trains on the rows of `x` listed in `rows`, using the matching block of a
/// precomputed Gram matrix.
inline LinearSvmModel train_on_gram(const Eigen::MatrixXd& xm, const Eigen::MatrixXd& gram, std::span<const int> y_all,
                                    std::span<const std::size_t> rows, double c, std::uint64_t seed,
                                    DescriptorKind kind, const SvmTrainOptions& opts) {
  const std::size_t n = rows.size();
  Eigen::MatrixXd k(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      k(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          gram(static_cast<Eigen::Index>(rows[a]), static_cast<Eigen::Index>(rows[b]));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(substream_seed(seed, "svm-order", n));
  rng.shuffle(order);

  // The objective is symmetric under (y, w, b) -> (-y, -w, -b).  Solving in
  // the orientation where the first scanned sample is +1 makes a label flip
  // produce an exactly negated model.
  const int orient = y_all[rows[order[0]]];
  std::vector<int> y(n);
  for (std::size_t a = 0; a < n; ++a) y[a] = orient * y_all[rows[a]];

  const DualSolution sol = solve_dual(k, y, c, order, opts);

  LinearSvmModel m;
  m.C = c;
  m.feature_kind = kind;
  m.train_seed = seed;
  m.converged = sol.converged;
  m.iterations = sol.iterations;
  m.weights.assign(static_cast<std::size_t>(xm.cols()), 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    const double coef = sol.alpha[a] * y[a];
    if (coef == 0.0) continue;
    const auto row = xm.row(static_cast<Eigen::Index>(rows[a]));
    for (std::size_t q = 0; q < m.weights.size(); ++q) m.weights[q] += coef * row(static_cast<Eigen::Index>(q));
  }
  for (double& v : m.weights) v *= orient;
  m.bias = -orient * sol.rho;

  std::vector<double> scores(n);
  double hinge = 0, reg = 0, mean = 0;
  for (double v : m.weights) reg += v * v;
  for (std::size_t a = 0; a < n; ++a) {
    const auto row = xm.row(static_cast<Eigen::Index>(rows[a]));
    double s = m.bias;
    for (std::size_t q = 0; q < m.weights.size(); ++q) s += m.weights[q] * row(static_cast<Eigen::Index>(q));
    scores[a] = s;
    mean += s;
    hinge += std::max(0.0, 1.0 - y_all[rows[a]] * s);
  }
  mean /= static_cast<double>(n);
  double var = 0;
  for (double s : scores) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  m.objective_value = 0.5 * reg + c * hinge;
  m.train_score_mean = mean;
  m.train_score_std = sd > 0 ? sd : 1.0;
  return m;
}

}  // namespace detail

/// Soft-margin linear SVM, bias unregularized, solved exactly in the dual.
/// Deterministic: (x, y, C, seed) fixes every bit of the model.
inline LinearSvmModel train_svm(const FeatureRows& x, std::span<const int> y, double c, std::uint64_t seed,
                                DescriptorKind kind = DescriptorKind::Lbp, const SvmTrainOptions& opts = {}) {
  detail::check_training_set(x, y, c);
  const Eigen::MatrixXd xm = detail::to_matrix(x);
  const Eigen::MatrixXd gram = xm * xm.transpose();
  std::vector<std::size_t> rows(x.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return detail::train_on_gram(xm, gram, y, rows, c, seed, kind, opts);
}

inline double decision_score(const LinearSvmModel& m, std::span<const double> x) {
  if (x.size() != m.dim())
    throw DataError("decision_score: feature dim " + std::to_string(x.size()) + " != model dim " + std::to_string(m.dim()));
  double s = m.bias;
  for (std::size_t k = 0; k < x.size(); ++k) s += m.weights[k] * x[k];
  return s;
}

inline double decision_score(const LinearSvmModel& m, const FeatureVector& fv) {
  if (fv.kind != m.feature_kind)
    throw DataError("decision_score: model expects " + std::string(to_string(m.feature_kind)) + " features, got " +
                    std::string(to_string(fv.kind)));
  return decision_score(m, std::span<const double>(fv.values));
}

inline std::vector<double> default_c_grid() {
  std::vector<double> g;
  for (int e = -5; e <= 5; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

struct CSelection {
  double best_c = 0.0;
  std::vector<double> grid;
  std::vector<std::vector<double>> fold_accuracy;  // [grid index][fold]
  std::vector<double> mean_accuracy;
};

/// Stratified k-fold choice of C by mean validation accuracy; ties go to
/// the smaller C.  Fold membership is keyed on `ids` (stable sample ids),
/// so the result does not depend on the order samples are supplied in.
inline CSelection select_c(const FeatureRows& x, std::span<const int> y, std::span<const std::uint64_t> ids,
                           std::vector<double> grid, int folds, std::uint64_t seed,
                           DescriptorKind kind = DescriptorKind::Lbp, const SvmTrainOptions& opts = {}) {
  if (grid.empty()) throw ConfigError("select_c: empty C grid");
  if (folds < 2) throw ConfigError("select_c: need at least 2 folds");
  if (ids.size() != x.size()) throw DataError("select_c: one id per sample required");
  detail::check_training_set(x, y, grid.front());
  std::sort(grid.begin(), grid.end());

  // Canonical order: by seeded id hash, id as tiebreak.
  std::vector<std::size_t> canon(x.size());
  std::iota(canon.begin(), canon.end(), std::size_t{0});
  const std::uint64_t salt = substream_seed(seed, "select-c");
  std::sort(canon.begin(), canon.end(), [&](std::size_t a, std::size_t b) {
    const auto ka = splitmix64(ids[a] ^ salt), kb = splitmix64(ids[b] ^ salt);
    return ka != kb ? ka < kb : ids[a] < ids[b];
  });
  for (std::size_t i = 1; i < canon.size(); ++i)
    if (ids[canon[i]] == ids[canon[i - 1]]) throw DataError("select_c: duplicate sample id");

  FeatureRows xc;
  std::vector<int> yc;
  for (std::size_t i : canon) {
    xc.push_back(x[i]);
    yc.push_back(y[i]);
  }
  std::vector<int> fold_of(xc.size());
  std::size_t seen_pos = 0, seen_neg = 0;
  for (std::size_t i = 0; i < xc.size(); ++i)
    fold_of[i] = static_cast<int>((yc[i] == kSpoof ? seen_pos++ : seen_neg++) % static_cast<std::size_t>(folds));
  if (seen_pos < static_cast<std::size_t>(folds) || seen_neg < static_cast<std::size_t>(folds))
    throw DataError("select_c: each class needs at least as many samples as folds for stratification");

  const Eigen::MatrixXd xm = detail::to_matrix(xc);
  const Eigen::MatrixXd gram = xm * xm.transpose();
  CSelection out;
  out.grid = grid;
  for (double c : grid) {
    std::vector<double> accs;
    for (int f = 0; f < folds; ++f) {
      std::vector<std::size_t> train_rows, val_rows;
      for (std::size_t i = 0; i < xc.size(); ++i) (fold_of[i] == f ? val_rows : train_rows).push_back(i);
      const auto m = detail::train_on_gram(xm, gram, yc, train_rows, c, substream_seed(seed, "select-c-fold", f), kind, opts);
      std::size_t correct = 0;
      for (std::size_t i : val_rows) {
        const double s = decision_score(m, std::span<const double>(xc[i]));
        if ((s >= 0 ? kSpoof : kLive) == yc[i]) ++correct;
      }
      accs.push_back(static_cast<double>(correct) / static_cast<double>(val_rows.size()));
    }
    out.mean_accuracy.push_back(std::accumulate(accs.begin(), accs.end(), 0.0) / folds);
    out.fold_accuracy.push_back(std::move(accs));
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (out.mean_accuracy[g] > out.mean_accuracy[best]) best = g;
  out.best_c = grid[best];
  return out;
}

/// Zero-mean/unit-variance score using the model's training-score stats.
inline double standardize_score(const LinearSvmModel& m, double score) {
  return (score - m.train_score_mean) / m.train_score_std;
}

enum class ScoreFusion { Mean, Max };

inline double fuse_scores(std::span<const double> standardized, ScoreFusion method) {
  if (standardized.empty()) throw DataError("fuse_scores: no scores to fuse");
  for (double s : standardized)
    if (!std::isfinite(s)) throw DataError("fuse_scores: non-finite score");
  if (method == ScoreFusion::Max) return *std::max_element(standardized.begin(), standardized.end());
  return std::accumulate(standardized.begin(), standardized.end(), 0.0) / static_cast<double>(standardized.size());
}

}  // namespace ftirpad

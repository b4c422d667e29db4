#include "dct/causal_forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dct/metrics.hpp"

namespace dct {

void CausalForestParams::validate() const {
  if (num_trees == 0) throw std::invalid_argument("CausalForestParams: num_trees must be >= 1");
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
    throw std::invalid_argument("CausalForestParams: subsample_fraction must lie in (0, 1]");
  }
  if (!(honest_fraction > 0.0 && honest_fraction < 1.0)) {
    throw std::invalid_argument("CausalForestParams: honest_fraction must lie in (0, 1)");
  }
  if (min_leaf_treated == 0 || min_leaf_control == 0) {
    throw std::invalid_argument("CausalForestParams: leaf minima must be >= 1");
  }
  if (nuisance_trees == 0) throw std::invalid_argument("CausalForestParams: nuisance_trees must be >= 1");
}

NuisanceValues NuisanceValues::subset(std::span<const std::size_t> rows) const {
  NuisanceValues out;
  for (std::size_t r : rows) {
    out.m.push_back(m.at(r));
    out.e.push_back(e.at(r));
    out.mu0.push_back(mu0.at(r));
    out.mu1.push_back(mu1.at(r));
  }
  return out;
}

NuisanceModels fit_nuisances(const Dataset& d, const ForestParams& params) {
  d.require_both_arms();
  std::vector<std::size_t> treated;
  std::vector<std::size_t> control;
  for (std::size_t i = 0; i < d.rows(); ++i) (d.w[i] == 1 ? treated : control).push_back(i);
  const auto w = d.w_as_double();
  auto with_seed = [&](std::uint64_t stream) {
    ForestParams p = params;
    p.seed = derive_seed(params.seed, stream);
    return p;
  };
  return NuisanceModels{
      fit_regression_forest(d.x, d.y, with_seed(0), "m_hat"),
      fit_regression_forest(d.x, w, with_seed(1), "e_hat"),
      fit_regression_forest(d.x, d.y, with_seed(2), "mu0_hat", control),
      fit_regression_forest(d.x, d.y, with_seed(3), "mu1_hat", treated),
  };
}

NuisanceValues nuisance_oob(const NuisanceModels& models, const Matrix& x) {
  return NuisanceValues{predict_oob(models.m_hat, x).values, clip_propensity(predict_oob(models.e_hat, x).values),
                        predict_oob(models.mu0_hat, x).values, predict_oob(models.mu1_hat, x).values};
}

NuisanceValues nuisance_predict(const NuisanceModels& models, const Matrix& x) {
  return NuisanceValues{predict(models.m_hat, x), clip_propensity(predict(models.e_hat, x)),
                        predict(models.mu0_hat, x), predict(models.mu1_hat, x)};
}

bool CausalTree::uses_row(std::size_t row) const {
  return std::binary_search(fit_rows.begin(), fit_rows.end(), row) ||
         std::binary_search(est_rows.begin(), est_rows.end(), row);
}

CenteredData center(const Dataset& d, const NuisanceValues& oob) {
  CenteredData c;
  c.y_res.resize(d.rows());
  c.w_res.resize(d.rows());
  for (std::size_t i = 0; i < d.rows(); ++i) {
    c.y_res[i] = d.y[i] - oob.m.at(i);
    c.w_res[i] = d.w[i] - oob.e.at(i);
  }
  return c;
}

namespace {

constexpr double kMinTreatmentVariation = 1e-12;

struct ArmCounts {
  std::size_t treated = 0;
  std::size_t control = 0;
};

struct CausalGrower {
  const Dataset& d;
  const CenteredData& c;
  const CausalForestParams& params;
  std::size_t mtry;
  Rng& rng;
  std::vector<TreeNode> nodes;
  std::vector<std::size_t> feature_pool;

  struct FitEntry {
    double x;
    double wy;
    double ww;
    int w;
  };
  struct EstEntry {
    double x;
    int w;
  };
  std::vector<FitEntry> fit_buf;
  std::vector<EstEntry> est_buf;

  bool arms_ok(const ArmCounts& a) const {
    return a.treated >= params.min_leaf_treated && a.control >= params.min_leaf_control;
  }

  ArmCounts count_arms(const std::vector<std::size_t>& rows) const {
    ArmCounts a;
    for (std::size_t r : rows) (d.w[r] == 1 ? a.treated : a.control)++;
    return a;
  }

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;
  };

  Split best_split(const std::vector<std::size_t>& fit, const std::vector<std::size_t>& est) {
    Split best;
    const std::size_t p = d.cols();
    const std::size_t k = std::min(mtry, p);
    for (std::size_t i = 0; i < k; ++i) std::swap(feature_pool[i], feature_pool[i + uniform_index(rng, p - i)]);
    std::vector<std::size_t> features(feature_pool.begin(), feature_pool.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(features.begin(), features.end());

    const ArmCounts fit_total = count_arms(fit);
    const ArmCounts est_total = count_arms(est);
    double wy_total = 0.0;
    double ww_total = 0.0;
    for (std::size_t r : fit) {
      wy_total += c.w_res[r] * c.y_res[r];
      ww_total += c.w_res[r] * c.w_res[r];
    }
    const auto n = static_cast<double>(fit.size());

    for (std::size_t f : features) {
      fit_buf.clear();
      for (std::size_t r : fit) {
        fit_buf.push_back({d.x(r, f), c.w_res[r] * c.y_res[r], c.w_res[r] * c.w_res[r], d.w[r]});
      }
      est_buf.clear();
      for (std::size_t r : est) est_buf.push_back({d.x(r, f), d.w[r]});
      std::sort(fit_buf.begin(), fit_buf.end(), [](const auto& a, const auto& b) { return a.x < b.x; });
      std::sort(est_buf.begin(), est_buf.end(), [](const auto& a, const auto& b) { return a.x < b.x; });

      ArmCounts fit_left;
      ArmCounts est_left;
      double wy_left = 0.0;
      double ww_left = 0.0;
      std::size_t j = 0;
      for (std::size_t i = 1; i < fit_buf.size(); ++i) {
        const FitEntry& prev = fit_buf[i - 1];
        (prev.w == 1 ? fit_left.treated : fit_left.control)++;
        wy_left += prev.wy;
        ww_left += prev.ww;
        if (!(prev.x < fit_buf[i].x)) continue;
        const ArmCounts fit_right{fit_total.treated - fit_left.treated, fit_total.control - fit_left.control};
        if (!arms_ok(fit_left)) continue;
        if (!arms_ok(fit_right)) break;
        const double threshold = detail::split_midpoint(prev.x, fit_buf[i].x);
        while (j < est_buf.size() && est_buf[j].x <= threshold) {
          (est_buf[j].w == 1 ? est_left.treated : est_left.control)++;
          ++j;
        }
        const ArmCounts est_right{est_total.treated - est_left.treated, est_total.control - est_left.control};
        if (!arms_ok(est_left) || !arms_ok(est_right)) continue;
        const double ww_right = ww_total - ww_left;
        if (ww_left <= kMinTreatmentVariation || ww_right <= kMinTreatmentVariation) continue;
        const double tau_left = wy_left / ww_left;
        const double tau_right = (wy_total - wy_left) / ww_right;
        const auto n_left = static_cast<double>(i);
        const double score = n_left * (n - n_left) / (n * n) * (tau_left - tau_right) * (tau_left - tau_right);
        if (score > best.score) {
          best.score = score;
          best.feature = static_cast<int>(f);
          best.threshold = threshold;
        }
      }
    }
    return best;
  }

  int build(std::vector<std::size_t> fit, std::vector<std::size_t> est, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    const bool depth_ok = params.max_depth < 0 || depth < params.max_depth;
    const std::size_t min_child = params.min_leaf_treated + params.min_leaf_control;
    if (!depth_ok || fit.size() < 2 * min_child || est.size() < 2 * min_child) return id;
    const Split split = best_split(fit, est);
    if (split.feature < 0) return id;

    std::vector<std::size_t> fit_left, fit_right, est_left, est_right;
    for (std::size_t r : fit) (d.x(r, split.feature) <= split.threshold ? fit_left : fit_right).push_back(r);
    for (std::size_t r : est) (d.x(r, split.feature) <= split.threshold ? est_left : est_right).push_back(r);
    fit = {};
    est = {};
    nodes[id].feature = split.feature;
    nodes[id].threshold = split.threshold;
    const int left = build(std::move(fit_left), std::move(est_left), depth + 1);
    nodes[id].left = left;
    const int right = build(std::move(fit_right), std::move(est_right), depth + 1);
    nodes[id].right = right;
    return id;
  }
};

std::size_t causal_mtry(const CausalForestParams& params, std::size_t p) {
  if (params.mtry > 0) return std::min(params.mtry, p);
  const auto root = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
  return std::min(root + 20, p);
}

}  // namespace

void set_honest_values(RegressionTree& tree, const Matrix& x, const CenteredData& centered,
                       std::span<const std::size_t> est_rows) {
  std::vector<double> wy(tree.size(), 0.0);
  std::vector<double> ww(tree.size(), 0.0);
  std::vector<std::size_t> count(tree.size(), 0);
  for (std::size_t r : est_rows) {
    for (std::size_t id : tree.path(x.row(r))) {
      wy[id] += centered.w_res[r] * centered.y_res[r];
      ww[id] += centered.w_res[r] * centered.w_res[r];
      ++count[id];
    }
  }
  for (std::size_t id = 0; id < tree.size(); ++id) {
    tree.set_value(id, ww[id] > kMinTreatmentVariation ? wy[id] / ww[id] : 0.0, count[id]);
  }
}

CausalTree fit_causal_tree(const Dataset& d, const CenteredData& centered, std::vector<std::size_t> fit_rows,
                           std::vector<std::size_t> est_rows, const CausalForestParams& params, Rng& rng) {
  std::sort(fit_rows.begin(), fit_rows.end());
  std::sort(est_rows.begin(), est_rows.end());
  CausalTree out;
  double ww_root = 0.0;
  for (std::size_t r : fit_rows) ww_root += centered.w_res[r] * centered.w_res[r];
  if (ww_root <= kMinTreatmentVariation) {
    out.tree = RegressionTree(d.cols(), 0.0);
    out.degenerate = true;
  } else {
    CausalGrower grower{d, centered, params, causal_mtry(params, d.cols()), rng, {}, {}, {}, {}};
    grower.feature_pool.resize(d.cols());
    std::iota(grower.feature_pool.begin(), grower.feature_pool.end(), std::size_t{0});
    grower.build(fit_rows, est_rows, 0);
    out.tree = RegressionTree(d.cols(), std::move(grower.nodes));
  }
  set_honest_values(out.tree, d.x, centered, est_rows);
  out.fit_rows = std::move(fit_rows);
  out.est_rows = std::move(est_rows);
  return out;
}

CausalForest fit_causal_forest(const Dataset& d, const CausalForestParams& params) {
  params.validate();
  d.require_both_arms();
  ForestParams nuisance;
  nuisance.num_trees = params.nuisance_trees;
  nuisance.seed = derive_seed(params.seed, 0x6e75697361ULL);
  return fit_causal_forest(d, params, std::make_shared<const NuisanceModels>(fit_nuisances(d, nuisance)));
}

CausalForest fit_causal_forest(const Dataset& d, const CausalForestParams& params,
                               std::shared_ptr<const NuisanceModels> nuisances) {
  params.validate();
  d.validate();
  d.require_both_arms();
  const std::size_t min_n = 4 * (params.min_leaf_treated + params.min_leaf_control);
  if (d.rows() < min_n) {
    throw DataError("fit_causal_forest: need at least " + std::to_string(min_n) + " rows, got " +
                    std::to_string(d.rows()));
  }
  if (!nuisances) throw std::invalid_argument("fit_causal_forest: nuisance models are required");

  const CenteredData centered = center(d, nuisance_oob(*nuisances, d.x));
  const std::size_t n = d.rows();
  const auto sample_size =
      std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(params.subsample_fraction * static_cast<double>(n))));
  const auto fit_size = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(params.honest_fraction * static_cast<double>(sample_size))), 1,
      sample_size - 1);

  CausalForest forest;
  forest.params = params;
  forest.nuisances = std::move(nuisances);
  forest.fingerprint = TrainingFingerprint::of(d.x);
  forest.trees.resize(params.num_trees);
  parallel_for(params.num_trees, [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, t));
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    for (std::size_t i = 0; i < sample_size; ++i) std::swap(rows[i], rows[i + uniform_index(rng, n - i)]);
    std::vector<std::size_t> fit(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(fit_size));
    std::vector<std::size_t> est(rows.begin() + static_cast<std::ptrdiff_t>(fit_size),
                                 rows.begin() + static_cast<std::ptrdiff_t>(sample_size));
    forest.trees[t] = fit_causal_tree(d, centered, std::move(fit), std::move(est), params, rng);
  });
  double root_sum = 0.0;
  for (const auto& t : forest.trees) {
    if (t.degenerate) ++forest.degenerate_trees;
    root_sum += t.tree.node(0).value;
  }
  forest.mean_root_value = root_sum / static_cast<double>(forest.trees.size());
  return forest;
}

OobPrediction predict_oob_cate(const CausalForest& forest, const Dataset& d) {
  if (!(TrainingFingerprint::of(d.x) == forest.fingerprint)) {
    throw DataError("predict_oob_cate: data does not match the forest's training fingerprint");
  }
  const std::size_t n = d.rows();
  OobPrediction out;
  out.values.assign(n, 0.0);
  out.flagged.assign(n, 0);
  std::vector<std::size_t> counts(n, 0);
  std::vector<std::uint8_t> used(n);
  for (const auto& t : forest.trees) {
    std::fill(used.begin(), used.end(), 0);
    for (std::size_t r : t.fit_rows) used[r] = 1;
    for (std::size_t r : t.est_rows) used[r] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      out.values[i] += t.tree.predict(d.x.row(i));
      ++counts[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] == 0) {
      out.values[i] = forest.mean_root_value;
      out.flagged[i] = 1;
    } else {
      out.values[i] /= static_cast<double>(counts[i]);
    }
  }
  return out;
}

std::vector<double> predict_cate(const CausalForest& forest, const Matrix& x) {
  if (x.cols() != forest.fingerprint.p) {
    throw std::invalid_argument("predict_cate: expected " + std::to_string(forest.fingerprint.p) +
                                " columns, got " + std::to_string(x.cols()));
  }
  std::vector<double> out(x.rows(), 0.0);
  for (const auto& t : forest.trees) {
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] += t.tree.predict(x.row(i));
  }
  for (double& v : out) v /= static_cast<double>(forest.trees.size());
  return out;
}

CausalTree extract_pruned_tree(const CausalForest& forest, std::size_t index, int max_depth) {
  if (index >= forest.trees.size()) {
    throw std::out_of_range("extract_pruned_tree: tree " + std::to_string(index) + " of " +
                            std::to_string(forest.trees.size()));
  }
  if (max_depth < 0) throw std::invalid_argument("extract_pruned_tree: max_depth must be >= 0");
  CausalTree out = forest.trees[index];
  out.tree = out.tree.truncated(max_depth);
  return out;
}

std::size_t best_tree_by_rloss(const CausalForest& forest, const Dataset& d, std::span<const double> m_hat,
                               std::span<const double> e_hat, int max_depth, bool oob_restricted) {
  if (forest.trees.empty()) throw std::invalid_argument("best_tree_by_rloss: empty forest");
  if (m_hat.size() != d.rows() || e_hat.size() != d.rows()) {
    throw std::invalid_argument("best_tree_by_rloss: nuisance length mismatch");
  }
  if (oob_restricted && !(TrainingFingerprint::of(d.x) == forest.fingerprint)) {
    throw DataError("best_tree_by_rloss: OOB scoring requires the training data");
  }
  const std::size_t num = forest.trees.size();
  std::vector<double> losses(num, std::numeric_limits<double>::infinity());
  const auto w = d.w_as_double();
  parallel_for(num, [&](std::size_t t) {
    const RegressionTree pruned = forest.trees[t].tree.truncated(max_depth);
    std::vector<double> pred, y, wv, m, e;
    for (std::size_t i = 0; i < d.rows(); ++i) {
      if (oob_restricted && forest.trees[t].uses_row(i)) continue;
      pred.push_back(pruned.predict(d.x.row(i)));
      y.push_back(d.y[i]);
      wv.push_back(w[i]);
      m.push_back(m_hat[i]);
      e.push_back(e_hat[i]);
    }
    if (!pred.empty()) losses[t] = r_loss(pred, y, wv, m, e);
  });
  std::size_t best = 0;
  for (std::size_t t = 1; t < num; ++t) {
    if (losses[t] < losses[best]) best = t;
  }
  return best;
}

Matrix per_tree_predictions(const CausalForest& forest, const Matrix& x, int max_depth) {
  if (x.cols() != forest.fingerprint.p) throw std::invalid_argument("per_tree_predictions: column mismatch");
  Matrix out(x.rows(), forest.trees.size());
  parallel_for(forest.trees.size(), [&](std::size_t t) {
    const RegressionTree pruned = forest.trees[t].tree.truncated(max_depth);
    for (std::size_t i = 0; i < x.rows(); ++i) out(i, t) = pruned.predict(x.row(i));
  });
  return out;
}

std::vector<double> mean_tree_prediction(const CausalForest& forest, const Matrix& x, int max_depth) {
  const Matrix per_tree = per_tree_predictions(forest, x, max_depth);
  std::vector<double> out(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = mean(per_tree.row(i));
  return out;
}

}  // namespace dct

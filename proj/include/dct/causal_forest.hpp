#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dct/dataset.hpp"
#include "dct/regression_forest.hpp"
#include "dct/tree.hpp"

namespace dct {

struct CausalForestParams {
  std::size_t num_trees = 2000;
  double subsample_fraction = 0.5;
  /// Share of each tree's subsample used to choose splits; the rest sets leaf values.
  double honest_fraction = 0.5;
  std::size_t mtry = 0;  // 0: min(ceil(sqrt(p)) + 20, p)
  std::size_t min_leaf_treated = 5;
  std::size_t min_leaf_control = 5;
  int max_depth = -1;
  std::uint64_t seed = 0;
  /// Trees per nuisance forest when fit_causal_forest fits its own nuisances.
  std::size_t nuisance_trees = 500;

  void validate() const;
};

/// Nuisance forests: outcome mean m(x), propensity e(x), and arm-specific
/// outcome means mu0(x) (fit on controls) and mu1(x) (fit on treated).
struct NuisanceModels {
  RegressionForest m_hat;
  RegressionForest e_hat;
  RegressionForest mu0_hat;
  RegressionForest mu1_hat;
};

/// Nuisance predictions aligned with a set of rows; e is already clipped.
struct NuisanceValues {
  std::vector<double> m;
  std::vector<double> e;
  std::vector<double> mu0;
  std::vector<double> mu1;

  NuisanceValues subset(std::span<const std::size_t> rows) const;
};

NuisanceModels fit_nuisances(const Dataset& d, const ForestParams& params);
/// Out-of-bag predictions on the training data.
NuisanceValues nuisance_oob(const NuisanceModels& models, const Matrix& x);
/// Full-forest predictions for new rows.
NuisanceValues nuisance_predict(const NuisanceModels& models, const Matrix& x);

/// One honest tree: the structure is chosen on fit_rows, node values are
/// residual-on-residual ratios over est_rows. Every node (not only leaves)
/// stores its est-row ratio and est-row count.
struct CausalTree {
  RegressionTree tree;
  std::vector<std::size_t> fit_rows;  // sorted
  std::vector<std::size_t> est_rows;  // sorted
  /// No treatment variation among fit rows at the root; the tree is a single leaf.
  bool degenerate = false;

  bool uses_row(std::size_t row) const;
};

/// Locally centered residuals (y - m_oob, w - e_oob).
struct CenteredData {
  std::vector<double> y_res;
  std::vector<double> w_res;
};
CenteredData center(const Dataset& d, const NuisanceValues& oob);

struct CausalForest {
  std::vector<CausalTree> trees;
  std::shared_ptr<const NuisanceModels> nuisances;
  CausalForestParams params;
  TrainingFingerprint fingerprint;
  /// Trees whose root had no treatment variation after centering.
  std::size_t degenerate_trees = 0;
  /// Fallback for rows without an out-of-bag tree.
  double mean_root_value = 0.0;
};

CausalForest fit_causal_forest(const Dataset& d, const CausalForestParams& params);
/// Uses pre-fit nuisance forests (shared across models in a benchmark).
CausalForest fit_causal_forest(const Dataset& d, const CausalForestParams& params,
                               std::shared_ptr<const NuisanceModels> nuisances);

/// Grows one honest causal tree by maximizing
/// n_L n_R / (n_L + n_R)^2 * (tau_L - tau_R)^2 with tau = sum(w~ y~) / sum(w~^2),
/// subject to min_leaf_treated / min_leaf_control in both halves of each child.
CausalTree fit_causal_tree(const Dataset& d, const CenteredData& centered, std::vector<std::size_t> fit_rows,
                           std::vector<std::size_t> est_rows, const CausalForestParams& params, Rng& rng);

/// Recomputes every node's value and count from `est_rows` only.
void set_honest_values(RegressionTree& tree, const Matrix& x, const CenteredData& centered,
                       std::span<const std::size_t> est_rows);

OobPrediction predict_oob_cate(const CausalForest& forest, const Dataset& d);
std::vector<double> predict_cate(const CausalForest& forest, const Matrix& x);

CausalTree extract_pruned_tree(const CausalForest& forest, std::size_t index, int max_depth);

/// Index of the pruned tree with the lowest R-loss on (d, m_hat, e_hat).
/// With `oob_restricted`, d must be the training data and each tree is scored
/// on its own out-of-bag rows only. Ties go to the lowest index.
std::size_t best_tree_by_rloss(const CausalForest& forest, const Dataset& d, std::span<const double> m_hat,
                               std::span<const double> e_hat, int max_depth, bool oob_restricted);

/// Per-tree pruned predictions (rows x trees).
Matrix per_tree_predictions(const CausalForest& forest, const Matrix& x, int max_depth);
/// Row means of per_tree_predictions.
std::vector<double> mean_tree_prediction(const CausalForest& forest, const Matrix& x, int max_depth);

}  // namespace dct

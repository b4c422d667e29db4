#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dct/dataset.hpp"
#include "dct/tree.hpp"

namespace dct {

struct ForestParams {
  std::size_t num_trees = 500;
  double subsample_fraction = 0.5;
  std::size_t mtry = 0;  // 0: ceil(sqrt(p))
  std::size_t min_leaf = 5;
  int max_depth = -1;  // negative: unlimited
  std::uint64_t seed = 0;

  void validate() const;
};

/// A tree together with the training rows it was grown on. Row indices refer
/// to the full training matrix.
struct SubsampledTree {
  RegressionTree tree;
  std::vector<std::size_t> subsample;  // sorted

  bool contains(std::size_t row) const;
};

/// Identifies the covariate matrix a forest was trained on.
struct TrainingFingerprint {
  std::size_t n = 0;
  std::size_t p = 0;
  std::uint64_t hash = 0;

  static TrainingFingerprint of(const Matrix& x);
  bool operator==(const TrainingFingerprint&) const = default;
};

struct OobPrediction {
  std::vector<double> values;
  /// Rows with no out-of-bag tree; their value is the training mean.
  std::vector<std::uint8_t> flagged;

  std::size_t flagged_count() const;
};

struct RegressionForest {
  std::vector<SubsampledTree> trees;
  ForestParams params;
  std::string target_name;
  TrainingFingerprint fingerprint;
  double training_mean = 0.0;
  /// Set when the training target was constant (every tree is a single leaf).
  bool constant_target = false;
};

/// Fits honest-subsample CART trees to `target` using only the rows in
/// `rows` (all rows when empty). Each tree draws a subsample without
/// replacement and a fresh mtry feature subset at every node; tree t uses
/// the RNG seeded by derive_seed(seed, t) so serial and parallel fits agree.
RegressionForest fit_regression_forest(const Matrix& x, std::span<const double> target, const ForestParams& params,
                                       std::string target_name, std::span<const std::size_t> rows = {});

enum class ForestTarget { outcome, treatment };
RegressionForest fit_regression_forest(const Dataset& d, ForestTarget target, const ForestParams& params);

/// Out-of-bag prediction on the training matrix (checked by fingerprint).
OobPrediction predict_oob(const RegressionForest& forest, const Matrix& x);
/// Mean over all trees.
std::vector<double> predict(const RegressionForest& forest, const Matrix& x);

/// Propensity clipping applied before any downstream use of e-hat.
inline constexpr double kPropensityLower = 0.01;
inline constexpr double kPropensityUpper = 0.99;
std::vector<double> clip_propensity(std::vector<double> e);

}  // namespace dct

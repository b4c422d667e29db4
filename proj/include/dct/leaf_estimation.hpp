#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dct/causal_forest.hpp"
#include "dct/dataset.hpp"
#include "dct/tree.hpp"

namespace dct {

struct LeafEstimate {
  double tau_hat = 0.0;
  double se = 0.0;
  std::size_t n_node = 0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  bool significant_95 = false;
  /// False when the node has no treated or no control estimation rows; tau_hat
  /// is then 0 and must not be used.
  bool available = false;
  /// False until a bootstrap has run, or when the node has fewer than 2 rows.
  bool se_available = false;

  bool operator==(const LeafEstimate&) const = default;
};

/// A fixed tree structure with a doubly robust estimate in every node,
/// internal nodes included.
struct EstimatedTree {
  RegressionTree structure;
  std::vector<LeafEstimate> estimates;  // indexed by node id

  bool operator==(const EstimatedTree&) const = default;
};

/// AIPW score for one row:
///   (w - e) / (e (1 - e)) * (y - mu_w) + mu1 - mu0, with e clipped to [0.01, 0.99].
double aipw_score(double y, int w, double e, double mu0, double mu1);

/// Estimates every node from the rows in `est_rows` only. Nuisance vectors are
/// indexed like the rows of `d` and must be out-of-bag (or out-of-sample) for
/// those rows. A node's tau_hat is the mean AIPW score over its rows.
EstimatedTree estimate_leaves(const RegressionTree& tree, const Dataset& d, std::span<const std::size_t> est_rows,
                              const NuisanceValues& nuisances);
/// Same, using every row of `d`.
EstimatedTree estimate_leaves(const RegressionTree& tree, const Dataset& d, const NuisanceValues& nuisances);

/// Fills standard errors by resampling each node's own rows with replacement
/// `replicates` times (structure held fixed); se is the standard deviation of
/// the resampled means. Node k uses the RNG seeded by derive_seed(seed, k).
EstimatedTree bootstrap_se(EstimatedTree tree, const Dataset& d, std::span<const std::size_t> est_rows,
                           const NuisanceValues& nuisances, std::size_t replicates, std::uint64_t seed);

/// Convenience: estimate_leaves followed by bootstrap_se.
EstimatedTree estimate_with_se(const RegressionTree& tree, const Dataset& d, std::span<const std::size_t> est_rows,
                               const NuisanceValues& nuisances, std::size_t replicates, std::uint64_t seed);

/// Standard deviation (n - 1 denominator) of means of `replicates`
/// with-replacement resamples of `scores`.
double bootstrap_mean_sd(std::span<const double> scores, std::size_t replicates, Rng& rng);

enum class UnavailablePolicy {
  /// Throw when a row lands in a node without an estimate.
  error,
  /// Use the deepest available ancestor on the row's path.
  nearest_ancestor,
};

struct DctPrediction {
  std::vector<double> tau_hat;
  std::vector<double> se;
};

DctPrediction predict_dct(const EstimatedTree& tree, const Matrix& x,
                          UnavailablePolicy policy = UnavailablePolicy::error);

}  // namespace dct

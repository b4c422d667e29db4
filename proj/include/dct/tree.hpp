#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dct/common.hpp"

namespace dct {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  /// Prediction when this node is (or is truncated to) a leaf.
  double value = 0.0;
  std::size_t row_count = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Axis-aligned binary tree. Rows go left iff x[feature] <= threshold.
///
/// Nodes are stored in preorder with the root at index 0; every structural
/// edit returns a new, renumbered tree so the storage stays canonical.
class RegressionTree {
 public:
  RegressionTree() : RegressionTree(0, 0.0) {}
  RegressionTree(std::size_t num_features, double leaf_value, std::size_t row_count = 0);
  /// Validates structure (binary, acyclic, every node reachable once) and
  /// renumbers to preorder.
  RegressionTree(std::size_t num_features, std::vector<TreeNode> nodes);

  std::size_t num_features() const { return num_features_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  std::size_t leaf_count() const;
  int depth() const;
  /// Depth of every node (root = 0).
  std::vector<int> node_depths() const;
  /// Parent id of every node (-1 for the root).
  std::vector<int> parents() const;

  /// Node id of the leaf reached by `row`; stops early at depth `max_depth`
  /// when given.
  std::size_t route(std::span<const double> row, std::optional<int> max_depth = std::nullopt) const;
  /// Every node visited by `row`, root first.
  std::vector<std::size_t> path(std::span<const double> row) const;

  double predict(std::span<const double> row) const { return nodes_[route(row)].value; }
  /// Throws std::invalid_argument on a column-count mismatch or a non-finite
  /// feature value.
  std::vector<double> predict(const Matrix& x) const;

  /// Copy cut off at `max_depth`; internal nodes at the limit become leaves
  /// keeping their stored value.
  RegressionTree truncated(int max_depth) const;
  /// Replaces leaf `id` with a split whose children take `left_value` /
  /// `right_value`.
  RegressionTree with_split(std::size_t id, int feature, double threshold, double left_value = 0.0,
                            double right_value = 0.0) const;
  /// Collapses the subtree rooted at `id` into a leaf.
  RegressionTree collapsed(std::size_t id) const;
  /// Replaces the subtree at `id` with the subtree of `donor` rooted at `donor_id`.
  RegressionTree with_subtree(std::size_t id, const RegressionTree& donor, std::size_t donor_id) const;
  /// Replaces the split rule of internal node `id`.
  RegressionTree with_rule(std::size_t id, int feature, double threshold) const;

  void set_value(std::size_t id, double value, std::size_t row_count);

  bool operator==(const RegressionTree&) const = default;

 private:
  void canonicalize();

  std::size_t num_features_ = 0;
  std::vector<TreeNode> nodes_;
};

/// Regression target for the student: covariates of the fit half and the
/// teacher's out-of-bag CATE predictions on those rows.
struct DistillationTarget {
  Matrix x;
  std::vector<double> t;

  std::size_t size() const { return t.size(); }
  void validate() const;
};

/// Greedy variance-reduction CART. Candidate thresholds are midpoints of
/// consecutive distinct values; equal-gain ties go to the lowest feature id,
/// then the lowest threshold. A node is split only if the best split lowers
/// SSE by more than 1e-12.
RegressionTree fit_cart(const DistillationTarget& target, int max_depth, std::size_t min_leaf);

std::vector<double> predict_tree(const RegressionTree& tree, const Matrix& x);

namespace detail {

struct GrowOptions {
  int max_depth = -1;  // negative: unlimited
  std::size_t min_leaf = 1;
  std::size_t mtry = 0;  // 0: all features
  double min_gain = 1e-12;
};

/// Shared CART grower over `rows` of (x, target). `rng` is required when
/// mtry < number of features.
RegressionTree grow_cart(const Matrix& x, std::span<const double> target,
                         std::vector<std::size_t> rows, const GrowOptions& options, Rng* rng);

/// Midpoint between adjacent distinct sorted values that routes `lo` left and
/// `hi` right.
double split_midpoint(double lo, double hi);

}  // namespace detail

}  // namespace dct

#include "dct/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dct {

RegressionTree::RegressionTree(std::size_t num_features, double leaf_value, std::size_t row_count)
    : num_features_(num_features) {
  TreeNode leaf;
  leaf.value = leaf_value;
  leaf.row_count = row_count;
  nodes_.push_back(leaf);
}

RegressionTree::RegressionTree(std::size_t num_features, std::vector<TreeNode> nodes)
    : num_features_(num_features), nodes_(std::move(nodes)) {
  const std::size_t before = nodes_.size();
  canonicalize();
  if (nodes_.size() != before) throw std::invalid_argument("RegressionTree: unreachable nodes");
}

void RegressionTree::canonicalize() {
  if (nodes_.empty()) throw std::invalid_argument("RegressionTree: no nodes");
  std::vector<TreeNode> out;
  out.reserve(nodes_.size());
  std::vector<char> visited(nodes_.size(), 0);
  // (old id, slot in parent to patch)
  struct Item {
    int old_id;
    int parent_new;
    bool is_left;
  };
  std::vector<Item> stack = {{0, -1, false}};
  while (!stack.empty()) {
    const Item item = stack.back();
    stack.pop_back();
    if (item.old_id < 0 || static_cast<std::size_t>(item.old_id) >= nodes_.size()) {
      throw std::invalid_argument("RegressionTree: child id out of range");
    }
    if (visited[item.old_id]) throw std::invalid_argument("RegressionTree: node reachable twice");
    visited[item.old_id] = 1;
    TreeNode node = nodes_[item.old_id];
    const int new_id = static_cast<int>(out.size());
    if (item.parent_new >= 0) {
      (item.is_left ? out[item.parent_new].left : out[item.parent_new].right) = new_id;
    }
    if (node.is_leaf()) {
      node.feature = -1;
      node.left = node.right = -1;
      out.push_back(node);
      continue;
    }
    if (static_cast<std::size_t>(node.feature) >= num_features_) {
      throw std::invalid_argument("RegressionTree: split feature " + std::to_string(node.feature) +
                                  " out of range");
    }
    if (!std::isfinite(node.threshold)) throw std::invalid_argument("RegressionTree: non-finite threshold");
    const int left = node.left;
    const int right = node.right;
    out.push_back(node);
    stack.push_back({right, new_id, false});
    stack.push_back({left, new_id, true});
  }
  nodes_ = std::move(out);
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::vector<int> RegressionTree::node_depths() const {
  // Preorder storage: parents always precede children.
  std::vector<int> depth(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_leaf()) {
      depth[nodes_[i].left] = depth[i] + 1;
      depth[nodes_[i].right] = depth[i] + 1;
    }
  }
  return depth;
}

int RegressionTree::depth() const {
  const auto d = node_depths();
  return *std::max_element(d.begin(), d.end());
}

std::vector<int> RegressionTree::parents() const {
  std::vector<int> parent(nodes_.size(), -1);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_leaf()) {
      parent[nodes_[i].left] = static_cast<int>(i);
      parent[nodes_[i].right] = static_cast<int>(i);
    }
  }
  return parent;
}

std::size_t RegressionTree::route(std::span<const double> row, std::optional<int> max_depth) const {
  std::size_t id = 0;
  int depth = 0;
  while (!nodes_[id].is_leaf() && (!max_depth || depth < *max_depth)) {
    const TreeNode& n = nodes_[id];
    id = static_cast<std::size_t>(row[n.feature] <= n.threshold ? n.left : n.right);
    ++depth;
  }
  return id;
}

std::vector<std::size_t> RegressionTree::path(std::span<const double> row) const {
  std::vector<std::size_t> out = {0};
  while (!nodes_[out.back()].is_leaf()) {
    const TreeNode& n = nodes_[out.back()];
    out.push_back(static_cast<std::size_t>(row[n.feature] <= n.threshold ? n.left : n.right));
  }
  return out;
}

std::vector<double> RegressionTree::predict(const Matrix& x) const {
  if (x.cols() != num_features_) {
    throw std::invalid_argument("predict: expected " + std::to_string(num_features_) + " columns, got " +
                                std::to_string(x.cols()));
  }
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    for (std::size_t id : path(row)) {
      const TreeNode& n = nodes_[id];
      if (!n.is_leaf() && !std::isfinite(row[n.feature])) {
        throw std::invalid_argument("predict: non-finite value in column " + std::to_string(n.feature) +
                                    " at row " + std::to_string(i));
      }
    }
    out[i] = predict(row);
  }
  return out;
}

RegressionTree RegressionTree::truncated(int max_depth) const {
  if (max_depth < 0) throw std::invalid_argument("truncated: max_depth must be >= 0");
  RegressionTree out = *this;
  const auto depth = node_depths();
  for (std::size_t i = 0; i < out.nodes_.size(); ++i) {
    if (depth[i] == max_depth && !out.nodes_[i].is_leaf()) {
      out.nodes_[i].feature = -1;
      out.nodes_[i].left = out.nodes_[i].right = -1;
    }
  }
  out.canonicalize();
  return out;
}

RegressionTree RegressionTree::with_split(std::size_t id, int feature, double threshold, double left_value,
                                          double right_value) const {
  if (!node(id).is_leaf()) throw std::invalid_argument("with_split: node is not a leaf");
  RegressionTree out = *this;
  TreeNode left;
  left.value = left_value;
  TreeNode right;
  right.value = right_value;
  out.nodes_.push_back(left);
  out.nodes_.push_back(right);
  TreeNode& n = out.nodes_[id];
  n.feature = feature;
  n.threshold = threshold;
  n.left = static_cast<int>(out.nodes_.size() - 2);
  n.right = static_cast<int>(out.nodes_.size() - 1);
  out.canonicalize();
  return out;
}

RegressionTree RegressionTree::collapsed(std::size_t id) const {
  RegressionTree out = *this;
  TreeNode& n = out.nodes_.at(id);
  n.feature = -1;
  n.left = n.right = -1;
  out.canonicalize();
  return out;
}

RegressionTree RegressionTree::with_subtree(std::size_t id, const RegressionTree& donor,
                                            std::size_t donor_id) const {
  if (donor.num_features_ != num_features_) {
    throw std::invalid_argument("with_subtree: donor has a different feature space");
  }
  RegressionTree out = *this;
  // Append a copy of the donor subtree, then point `id` at it.
  auto copy = [&](auto&& self, std::size_t src) -> int {
    const int dst = static_cast<int>(out.nodes_.size());
    out.nodes_.push_back(donor.nodes_.at(src));
    if (!donor.nodes_[src].is_leaf()) {
      const int l = self(self, static_cast<std::size_t>(donor.nodes_[src].left));
      const int r = self(self, static_cast<std::size_t>(donor.nodes_[src].right));
      out.nodes_[dst].left = l;
      out.nodes_[dst].right = r;
    }
    return dst;
  };
  const int root_copy = copy(copy, donor_id);
  out.nodes_.at(id) = out.nodes_[root_copy];
  out.canonicalize();
  return out;
}

RegressionTree RegressionTree::with_rule(std::size_t id, int feature, double threshold) const {
  if (node(id).is_leaf()) throw std::invalid_argument("with_rule: node is a leaf");
  RegressionTree out = *this;
  out.nodes_[id].feature = feature;
  out.nodes_[id].threshold = threshold;
  out.canonicalize();
  return out;
}

void RegressionTree::set_value(std::size_t id, double value, std::size_t row_count) {
  nodes_.at(id).value = value;
  nodes_[id].row_count = row_count;
}

void DistillationTarget::validate() const {
  if (x.rows() != t.size()) throw std::invalid_argument("DistillationTarget: x and t lengths differ");
  for (double v : t) {
    if (!std::isfinite(v)) throw std::invalid_argument("DistillationTarget: non-finite target value");
  }
}

namespace detail {

double split_midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return (mid >= hi) ? lo : mid;
}

namespace {

struct Grower {
  const Matrix& x;
  std::span<const double> target;
  const GrowOptions& options;
  Rng* rng;
  std::vector<TreeNode> nodes;
  std::vector<std::pair<double, double>> buffer;
  std::vector<std::size_t> feature_pool;

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  Split best_split(const std::vector<std::size_t>& rows, double node_mean) {
    Split best;
    best.gain = options.min_gain;
    const std::size_t n = rows.size();
    const std::size_t p = x.cols();
    std::size_t k = p;
    if (options.mtry > 0 && options.mtry < p) {
      k = options.mtry;
      // Partial Fisher-Yates for the candidate subset.
      for (std::size_t i = 0; i < k; ++i) {
        std::swap(feature_pool[i], feature_pool[i + uniform_index(*rng, p - i)]);
      }
      std::sort(feature_pool.begin(), feature_pool.begin() + static_cast<std::ptrdiff_t>(k));
    }
    for (std::size_t fi = 0; fi < k; ++fi) {
      const std::size_t f = feature_pool[fi];
      buffer.resize(n);
      for (std::size_t i = 0; i < n; ++i) buffer[i] = {x(rows[i], f), target[rows[i]] - node_mean};
      std::sort(buffer.begin(), buffer.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double left_sum = 0.0;
      for (std::size_t i = 1; i < n; ++i) {
        left_sum += buffer[i - 1].second;
        const std::size_t n_left = i;
        const std::size_t n_right = n - i;
        if (n_left < options.min_leaf) continue;
        if (n_right < options.min_leaf) break;
        if (!(buffer[i - 1].first < buffer[i].first)) continue;
        // Centered sums: SSE reduction = S_L^2 (1/n_L + 1/n_R).
        const double gain = left_sum * left_sum * (1.0 / static_cast<double>(n_left) +
                                                   1.0 / static_cast<double>(n_right));
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.threshold = split_midpoint(buffer[i - 1].first, buffer[i].first);
        }
      }
    }
    if (k < p) std::sort(feature_pool.begin(), feature_pool.end());
    return best;
  }

  int build(std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    double sum = 0.0;
    for (std::size_t r : rows) sum += target[r];
    const double node_mean = sum / static_cast<double>(rows.size());
    nodes[id].value = node_mean;
    nodes[id].row_count = rows.size();

    const bool depth_ok = options.max_depth < 0 || depth < options.max_depth;
    if (!depth_ok || rows.size() < 2 * options.min_leaf || rows.size() < 2) return id;
    const Split split = best_split(rows, node_mean);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left_rows;
    std::vector<std::size_t> right_rows;
    for (std::size_t r : rows) {
      (x(r, split.feature) <= split.threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    nodes[id].feature = split.feature;
    nodes[id].threshold = split.threshold;
    const int left = build(std::move(left_rows), depth + 1);
    nodes[id].left = left;
    const int right = build(std::move(right_rows), depth + 1);
    nodes[id].right = right;
    return id;
  }
};

}  // namespace

RegressionTree grow_cart(const Matrix& x, std::span<const double> target, std::vector<std::size_t> rows,
                         const GrowOptions& options, Rng* rng) {
  if (rows.empty()) throw std::invalid_argument("grow_cart: no rows");
  if (options.mtry > 0 && options.mtry < x.cols() && rng == nullptr) {
    throw std::invalid_argument("grow_cart: feature subsampling needs an rng");
  }
  Grower grower{x, target, options, rng, {}, {}, {}};
  grower.feature_pool.resize(x.cols());
  std::iota(grower.feature_pool.begin(), grower.feature_pool.end(), std::size_t{0});
  grower.build(std::move(rows), 0);
  return RegressionTree(x.cols(), std::move(grower.nodes));
}

}  // namespace detail

RegressionTree fit_cart(const DistillationTarget& target, int max_depth, std::size_t min_leaf) {
  target.validate();
  if (max_depth < 0) throw std::invalid_argument("fit_cart: max_depth must be >= 0");
  if (min_leaf == 0) throw std::invalid_argument("fit_cart: min_leaf must be >= 1");
  if (target.size() < 2 * min_leaf) {
    throw std::invalid_argument("fit_cart: need at least 2 * min_leaf rows (" + std::to_string(2 * min_leaf) +
                                "), got " + std::to_string(target.size()));
  }
  std::vector<std::size_t> rows(target.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  detail::GrowOptions options;
  options.max_depth = max_depth;
  options.min_leaf = min_leaf;
  return detail::grow_cart(target.x, target.t, std::move(rows), options, nullptr);
}

std::vector<double> predict_tree(const RegressionTree& tree, const Matrix& x) { return tree.predict(x); }

}  // namespace dct

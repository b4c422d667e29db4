#include "dct/evo_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dct {

const char* to_string(Variation op) {
  switch (op) {
    case Variation::split: return "split";
    case Variation::prune: return "prune";
    case Variation::major_mutation: return "major_mutation";
    case Variation::minor_mutation: return "minor_mutation";
    case Variation::crossover: return "crossover";
  }
  return "unknown";
}

void EvoParams::validate() const {
  if (population_size < 2) throw std::invalid_argument("EvoParams: population_size must be >= 2");
  if (max_iterations == 0) throw std::invalid_argument("EvoParams: max_iterations must be >= 1");
  if (min_iterations > max_iterations) throw std::invalid_argument("EvoParams: min_iterations exceeds max_iterations");
  if (convergence_window == 0) throw std::invalid_argument("EvoParams: convergence_window must be >= 1");
  if (!(elite_fraction > 0.0 && elite_fraction <= 1.0) ||
      elite_fraction * static_cast<double>(population_size) < 1.0) {
    throw std::invalid_argument("EvoParams: elite_fraction * population_size must be >= 1");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("EvoParams: alpha must be >= 0");
  if (max_depth < 0) throw std::invalid_argument("EvoParams: max_depth must be >= 0");
  if (min_leaf == 0) throw std::invalid_argument("EvoParams: min_leaf must be >= 1");
  double total = 0.0;
  for (double p : operator_probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("EvoParams: operator probabilities must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("EvoParams: operator probabilities must sum to 1");
  if (!(greedy_seed_fraction >= 0.0 && greedy_seed_fraction <= 1.0)) {
    throw std::invalid_argument("EvoParams: greedy_seed_fraction must lie in [0, 1]");
  }
}

double evaluate_tree(const RegressionTree& tree, const DistillationTarget& target, double alpha) {
  const std::size_t n = target.size();
  if (n == 0) throw std::invalid_argument("evaluate_tree: empty target");
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pred = tree.predict(target.x.row(i));
    if (!std::isfinite(pred)) throw std::invalid_argument("evaluate_tree: non-finite prediction");
    const double r = target.t[i] - pred;
    sse += r * r;
  }
  const auto big_n = static_cast<double>(n);
  const double mse = std::max(sse / big_n, 1e-12);
  const auto leaves = static_cast<double>(tree.leaf_count());
  return big_n * std::log(mse) + alpha * 4.0 * (leaves + 1.0) * std::log(big_n);
}

bool refit_values(RegressionTree& tree, const DistillationTarget& target, std::size_t min_leaf) {
  std::vector<double> sum(tree.size(), 0.0);
  std::vector<std::size_t> count(tree.size(), 0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto row = target.x.row(i);
    std::size_t id = 0;
    while (true) {
      sum[id] += target.t[i];
      ++count[id];
      const TreeNode& n = tree.node(id);
      if (n.is_leaf()) break;
      id = static_cast<std::size_t>(row[n.feature] <= n.threshold ? n.left : n.right);
    }
  }
  bool ok = true;
  for (std::size_t id = 0; id < tree.size(); ++id) {
    const double value = count[id] > 0 ? sum[id] / static_cast<double>(count[id]) : 0.0;
    tree.set_value(id, value, count[id]);
    if (tree.node(id).is_leaf() && count[id] < min_leaf) ok = false;
  }
  return ok;
}

namespace {

constexpr int kMaxAttempts = 20;

/// Candidate thresholds and row bookkeeping shared by all variation operators.
class Varier {
 public:
  Varier(const DistillationTarget& target, const TreeLimits& limits) : target_(target), limits_(limits) {
    const std::size_t p = target.x.cols();
    grid_.resize(p);
    for (std::size_t f = 0; f < p; ++f) grid_[f] = midpoints(all_rows(), f);
  }

  RegressionTree vary(const RegressionTree& tree, Variation op, Rng& rng, const RegressionTree* mate) const {
    if (!applicable(tree, op, mate)) op = Variation::split;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      std::optional<RegressionTree> child = propose(tree, op, rng, mate);
      if (!child || child->depth() > limits_.max_depth) continue;
      if (refit_values(*child, target_, limits_.min_leaf)) return *std::move(child);
    }
    return tree;
  }

  /// Splits leaf `id` with a random feature and threshold; used to build the
  /// random initial population.
  std::optional<RegressionTree> random_split(const RegressionTree& tree, std::size_t id, Rng& rng) const {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      auto child = split_leaf(tree, id, rng);
      if (child && child->depth() <= limits_.max_depth && refit_values(*child, target_, limits_.min_leaf)) {
        return child;
      }
    }
    return std::nullopt;
  }

 private:
  std::vector<std::size_t> all_rows() const {
    std::vector<std::size_t> rows(target_.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
  }

  std::vector<std::size_t> rows_at(const RegressionTree& tree, std::size_t node) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < target_.size(); ++i) {
      const auto row = target_.x.row(i);
      std::size_t id = 0;
      while (id != node && !tree.node(id).is_leaf()) {
        const TreeNode& n = tree.node(id);
        id = static_cast<std::size_t>(row[n.feature] <= n.threshold ? n.left : n.right);
      }
      if (id == node) rows.push_back(i);
    }
    return rows;
  }

  std::vector<double> midpoints(const std::vector<std::size_t>& rows, std::size_t feature) const {
    std::vector<double> values;
    values.reserve(rows.size());
    for (std::size_t r : rows) values.push_back(target_.x(r, feature));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    std::vector<double> out;
    for (std::size_t i = 1; i < values.size(); ++i) out.push_back(detail::split_midpoint(values[i - 1], values[i]));
    return out;
  }

  static std::vector<std::size_t> internal_nodes(const RegressionTree& tree) {
    std::vector<std::size_t> out;
    for (std::size_t id = 0; id < tree.size(); ++id) {
      if (!tree.node(id).is_leaf()) out.push_back(id);
    }
    return out;
  }

  static std::vector<std::size_t> prunable_nodes(const RegressionTree& tree) {
    std::vector<std::size_t> out;
    for (std::size_t id = 0; id < tree.size(); ++id) {
      const TreeNode& n = tree.node(id);
      if (!n.is_leaf() && tree.node(n.left).is_leaf() && tree.node(n.right).is_leaf()) out.push_back(id);
    }
    return out;
  }

  bool applicable(const RegressionTree& tree, Variation op, const RegressionTree* mate) const {
    switch (op) {
      case Variation::split: return true;
      case Variation::prune:
      case Variation::major_mutation:
      case Variation::minor_mutation: return tree.size() > 1;
      case Variation::crossover: return mate != nullptr;
    }
    return false;
  }

  std::optional<RegressionTree> split_leaf(const RegressionTree& tree, std::size_t id, Rng& rng) const {
    const auto feature = static_cast<int>(uniform_index(rng, target_.x.cols()));
    const auto candidates = midpoints(rows_at(tree, id), static_cast<std::size_t>(feature));
    if (candidates.empty()) return std::nullopt;
    return tree.with_split(id, feature, candidates[uniform_index(rng, candidates.size())]);
  }

  std::optional<RegressionTree> propose(const RegressionTree& tree, Variation op, Rng& rng,
                                        const RegressionTree* mate) const {
    switch (op) {
      case Variation::split: {
        std::vector<std::size_t> leaves;
        for (std::size_t id = 0; id < tree.size(); ++id) {
          if (tree.node(id).is_leaf()) leaves.push_back(id);
        }
        return split_leaf(tree, leaves[uniform_index(rng, leaves.size())], rng);
      }
      case Variation::prune: {
        const auto nodes = prunable_nodes(tree);
        return tree.collapsed(nodes[uniform_index(rng, nodes.size())]);
      }
      case Variation::major_mutation: {
        const auto nodes = internal_nodes(tree);
        const std::size_t id = nodes[uniform_index(rng, nodes.size())];
        int feature = tree.node(id).feature;
        if (uniform01(rng) < 0.5) feature = static_cast<int>(uniform_index(rng, target_.x.cols()));
        const auto candidates = midpoints(rows_at(tree, id), static_cast<std::size_t>(feature));
        if (candidates.empty()) return std::nullopt;
        return tree.with_rule(id, feature, candidates[uniform_index(rng, candidates.size())]);
      }
      case Variation::minor_mutation: {
        const auto nodes = internal_nodes(tree);
        const std::size_t id = nodes[uniform_index(rng, nodes.size())];
        const TreeNode& n = tree.node(id);
        const auto& grid = grid_[static_cast<std::size_t>(n.feature)];
        const bool up = uniform01(rng) < 0.5;
        // Position of the current threshold in the candidate grid; a threshold
        // between grid points moves to the neighbour in the chosen direction.
        const auto it = std::lower_bound(grid.begin(), grid.end(), n.threshold);
        const auto pos = static_cast<std::ptrdiff_t>(it - grid.begin());
        const bool exact = it != grid.end() && *it == n.threshold;
        const std::ptrdiff_t next = up ? (exact ? pos + 1 : pos) : pos - 1;
        if (next < 0 || next >= static_cast<std::ptrdiff_t>(grid.size())) return std::nullopt;
        return tree.with_rule(id, n.feature, grid[static_cast<std::size_t>(next)]);
      }
      case Variation::crossover: {
        const std::size_t id = uniform_index(rng, tree.size());
        const std::size_t donor = uniform_index(rng, mate->size());
        return tree.with_subtree(id, *mate, donor).truncated(limits_.max_depth);
      }
    }
    return std::nullopt;
  }

  const DistillationTarget& target_;
  TreeLimits limits_;
  std::vector<std::vector<double>> grid_;
};

Variation sample_operator(const std::array<double, 5>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return static_cast<Variation>(k);
  }
  for (std::size_t k = probs.size(); k-- > 0;) {
    if (probs[k] > 0.0) return static_cast<Variation>(k);
  }
  return Variation::split;
}

struct Individual {
  RegressionTree tree;
  double evaluation = 0.0;
};

std::vector<long long> elite_fingerprint(const std::vector<Individual>& population, std::size_t elite) {
  std::vector<double> evals;
  evals.reserve(population.size());
  for (const auto& ind : population) evals.push_back(ind.evaluation);
  std::partial_sort(evals.begin(), evals.begin() + static_cast<std::ptrdiff_t>(elite), evals.end());
  std::vector<long long> out;
  for (std::size_t k = 0; k < elite; ++k) out.push_back(std::llround(evals[k] * 1e9));
  return out;
}

}  // namespace

RegressionTree vary(const RegressionTree& tree, Variation op, Rng& rng, const DistillationTarget& target,
                    const TreeLimits& limits, const RegressionTree* mate) {
  return Varier(target, limits).vary(tree, op, rng, mate);
}

EvoResult run_evtree(const DistillationTarget& target, const EvoParams& params) {
  params.validate();
  target.validate();
  if (target.size() < 2 * params.min_leaf) {
    throw std::invalid_argument("fit_evtree: target has " + std::to_string(target.size()) +
                                " rows, need at least 2 * min_leaf = " + std::to_string(2 * params.min_leaf));
  }
  const TreeLimits limits{params.max_depth, params.min_leaf};
  const Varier varier(target, limits);
  const std::size_t size = params.population_size;
  const std::size_t elite =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(params.elite_fraction * static_cast<double>(size))));

  EvoResult result;
  std::vector<Individual> population(size);

  // Initial population: greedy copies (the first one unperturbed), then random
  // trees of depth <= 2.
  std::size_t greedy_count = 0;
  if (params.greedy_seed_fraction > 0.0) {
    greedy_count = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(params.greedy_seed_fraction * static_cast<double>(size))), 1, size);
  }
  RegressionTree greedy;
  if (greedy_count > 0) {
    greedy = fit_cart(target, params.max_depth, params.min_leaf);
    result.greedy_evaluation = evaluate_tree(greedy, target, params.alpha);
  }
  parallel_for(size, [&](std::size_t i) {
    Rng rng(derive_seed(params.seed, 0, i));
    RegressionTree tree;
    if (i < greedy_count) {
      tree = i == 0 ? greedy : varier.vary(greedy, Variation::minor_mutation, rng, nullptr);
    } else {
      tree = RegressionTree(target.x.cols(), 0.0);
      refit_values(tree, target, 1);
      if (params.max_depth >= 1) {
        if (auto root = varier.random_split(tree, 0, rng)) {
          tree = *root;
          if (params.max_depth >= 2) {
            // Split the right child first so the left child's id stays valid.
            const std::size_t right = static_cast<std::size_t>(tree.node(0).right);
            const std::size_t left = static_cast<std::size_t>(tree.node(0).left);
            if (uniform01(rng) < 0.5) {
              if (auto t = varier.random_split(tree, right, rng)) tree = *t;
            }
            if (uniform01(rng) < 0.5) {
              if (auto t = varier.random_split(tree, left, rng)) tree = *t;
            }
          }
        }
      }
    }
    population[i] = {tree, evaluate_tree(tree, target, params.alpha)};
  });

  auto best_index = [&] {
    std::size_t best = 0;
    for (std::size_t i = 1; i < size; ++i) {
      if (population[i].evaluation < population[best].evaluation) best = i;
    }
    return best;
  };
  Individual best = population[best_index()];
  result.best_trace.push_back(best.evaluation);

  std::vector<Individual> children(size);
  std::vector<long long> last_fingerprint = elite_fingerprint(population, elite);
  std::size_t stable = 0;
  std::size_t iteration = 0;
  while (iteration < params.max_iterations) {
    ++iteration;
    parallel_for(size, [&](std::size_t i) {
      Rng rng(derive_seed(params.seed, iteration, i));
      const Variation op = sample_operator(params.operator_probs, rng);
      const RegressionTree* mate = nullptr;
      if (op == Variation::crossover) {
        std::size_t j = uniform_index(rng, size - 1);
        if (j >= i) ++j;
        mate = &population[j].tree;
      }
      RegressionTree child = varier.vary(population[i].tree, op, rng, mate);
      const double evaluation = evaluate_tree(child, target, params.alpha);
      children[i] = {std::move(child), evaluation};
    });
    // Deterministic crowding: each child competes with its own parent.
    for (std::size_t i = 0; i < size; ++i) {
      if (children[i].evaluation < population[i].evaluation) population[i] = std::move(children[i]);
    }
    const Individual& current = population[best_index()];
    if (current.evaluation < best.evaluation) best = current;
    result.best_trace.push_back(best.evaluation);

    auto fingerprint = elite_fingerprint(population, elite);
    stable = fingerprint == last_fingerprint ? stable + 1 : 0;
    last_fingerprint = std::move(fingerprint);

    double elite_sum = 0.0;
    for (long long v : last_fingerprint) elite_sum += static_cast<double>(v) * 1e-9;
    result.progress.push_back({iteration, best.evaluation, elite_sum / static_cast<double>(elite)});

    if (iteration >= params.min_iterations && stable >= params.convergence_window) {
      result.converged = true;
      break;
    }
  }

  result.tree = std::move(best.tree);
  result.evaluation = best.evaluation;
  result.iterations = iteration;
  return result;
}

}  // namespace dct

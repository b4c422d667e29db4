#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "dct/tree.hpp"

namespace dct {

enum class Variation { split = 0, prune = 1, major_mutation = 2, minor_mutation = 3, crossover = 4 };

const char* to_string(Variation op);

struct EvoParams {
  std::size_t population_size = 200;
  std::size_t max_iterations = 10000;
  std::size_t min_iterations = 1000;
  std::size_t convergence_window = 100;
  double elite_fraction = 0.05;
  /// Complexity weight of the penalty term.
  double alpha = 1.0;
  int max_depth = 4;
  std::size_t min_leaf = 25;
  /// Probabilities of split, prune, major mutation, minor mutation, crossover.
  std::array<double, 5> operator_probs = {0.2, 0.2, 0.2, 0.2, 0.2};
  /// Share of the initial population seeded from the greedy CART fit.
  double greedy_seed_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Penalized distillation loss:
///   N * ln(max(MSE, 1e-12)) + alpha * 4 * (M + 1) * ln(N)
/// with M the number of leaves and MSE taken against the tree's stored leaf
/// values.
double evaluate_tree(const RegressionTree& tree, const DistillationTarget& target, double alpha);

/// Depth and leaf-size limits every individual must respect.
struct TreeLimits {
  int max_depth = 4;
  std::size_t min_leaf = 1;
};

/// Sets every node's value to the mean target over the rows it receives.
/// Returns false if some leaf receives fewer than `min_leaf` rows.
bool refit_values(RegressionTree& tree, const DistillationTarget& target, std::size_t min_leaf);

/// Applies one variation operator and returns the (always valid) offspring;
/// the input is never modified. Inapplicable operators fall back to split.
/// Offspring violating `limits` are redrawn up to 20 times, after which the
/// parent is returned unchanged. Leaf values of the result are target means.
RegressionTree vary(const RegressionTree& tree, Variation op, Rng& rng, const DistillationTarget& target,
                    const TreeLimits& limits, const RegressionTree* mate = nullptr);

struct EvoProgress {
  std::size_t iteration = 0;
  double best_evaluation = 0.0;
  double elite_mean = 0.0;
};

struct EvoResult {
  RegressionTree tree;
  double evaluation = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Best-ever evaluation after initialization (entry 0) and after each iteration.
  std::vector<double> best_trace;
  std::vector<EvoProgress> progress;
  /// Evaluation of the greedy CART tree when greedy seeding was used.
  std::optional<double> greedy_evaluation;
};

/// Evolutionary search with deterministic crowding: every iteration each
/// individual produces one offspring and the better of the two (ties keep the
/// parent) survives. Stops once the elite evaluations have been unchanged for
/// convergence_window iterations (never before min_iterations) or at
/// max_iterations, returning the best tree ever observed.
EvoResult run_evtree(const DistillationTarget& target, const EvoParams& params);

inline RegressionTree fit_evtree(const DistillationTarget& target, const EvoParams& params) {
  return run_evtree(target, params).tree;
}

}  // namespace dct

#include "dct/leaf_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dct {

double aipw_score(double y, int w, double e, double mu0, double mu1) {
  e = std::clamp(e, kPropensityLower, kPropensityUpper);
  const double mu_w = w == 1 ? mu1 : mu0;
  return (w - e) / (e * (1.0 - e)) * (y - mu_w) + mu1 - mu0;
}

namespace {

void check_inputs(const RegressionTree& tree, const Dataset& d, std::span<const std::size_t> est_rows,
                  const NuisanceValues& nuisances) {
  if (est_rows.empty()) throw DataError("estimate_leaves: empty estimation sample");
  if (tree.num_features() != d.cols()) {
    throw std::invalid_argument("estimate_leaves: tree has " + std::to_string(tree.num_features()) +
                                " features, data has " + std::to_string(d.cols()));
  }
  const std::size_t n = d.rows();
  if (nuisances.e.size() != n || nuisances.mu0.size() != n || nuisances.mu1.size() != n) {
    throw std::invalid_argument("estimate_leaves: nuisance vectors must match the dataset rows");
  }
  for (std::size_t r : est_rows) {
    if (r >= n) throw std::out_of_range("estimate_leaves: estimation row out of range");
  }
}

/// Estimation rows reaching each node, in est_rows order.
std::vector<std::vector<std::size_t>> node_members(const RegressionTree& tree, const Dataset& d,
                                                   std::span<const std::size_t> est_rows) {
  std::vector<std::vector<std::size_t>> members(tree.size());
  for (std::size_t r : est_rows) {
    for (std::size_t id : tree.path(d.x.row(r))) members[id].push_back(r);
  }
  return members;
}

double score(const Dataset& d, const NuisanceValues& nu, std::size_t r) {
  return aipw_score(d.y[r], d.w[r], nu.e[r], nu.mu0[r], nu.mu1[r]);
}

}  // namespace

EstimatedTree estimate_leaves(const RegressionTree& tree, const Dataset& d, std::span<const std::size_t> est_rows,
                              const NuisanceValues& nuisances) {
  check_inputs(tree, d, est_rows, nuisances);
  const auto members = node_members(tree, d, est_rows);
  EstimatedTree out{tree, std::vector<LeafEstimate>(tree.size())};
  for (std::size_t id = 0; id < tree.size(); ++id) {
    LeafEstimate& est = out.estimates[id];
    est.n_node = members[id].size();
    double total = 0.0;
    for (std::size_t r : members[id]) {
      (d.w[r] == 1 ? est.n_treated : est.n_control)++;
      total += score(d, nuisances, r);
    }
    est.available = est.n_treated > 0 && est.n_control > 0;
    est.tau_hat = est.available ? total / static_cast<double>(est.n_node) : 0.0;
    out.structure.set_value(id, est.available ? est.tau_hat : 0.0, est.n_node);
  }
  return out;
}

EstimatedTree estimate_leaves(const RegressionTree& tree, const Dataset& d, const NuisanceValues& nuisances) {
  std::vector<std::size_t> rows(d.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return estimate_leaves(tree, d, rows, nuisances);
}

double bootstrap_mean_sd(std::span<const double> scores, std::size_t replicates, Rng& rng) {
  const std::size_t n = scores.size();
  // Welford: exactly zero when every resample mean is identical.
  double running_mean = 0.0;
  double m2 = 0.0;
  for (std::size_t b = 0; b < replicates; ++b) {
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) total += scores[uniform_index(rng, n)];
    const double m = total / static_cast<double>(n);
    const double delta = m - running_mean;
    running_mean += delta / static_cast<double>(b + 1);
    m2 += delta * (m - running_mean);
  }
  return std::sqrt(m2 / static_cast<double>(replicates - 1));
}

EstimatedTree bootstrap_se(EstimatedTree tree, const Dataset& d, std::span<const std::size_t> est_rows,
                           const NuisanceValues& nuisances, std::size_t replicates, std::uint64_t seed) {
  if (replicates < 2) throw std::invalid_argument("bootstrap_se: need at least 2 replicates");
  check_inputs(tree.structure, d, est_rows, nuisances);
  const auto members = node_members(tree.structure, d, est_rows);
  parallel_for(tree.structure.size(), [&](std::size_t id) {
    LeafEstimate& est = tree.estimates[id];
    if (!est.available || members[id].size() < 2) {
      est.se_available = false;
      est.se = 0.0;
      est.significant_95 = false;
      return;
    }
    std::vector<double> scores;
    scores.reserve(members[id].size());
    for (std::size_t r : members[id]) scores.push_back(score(d, nuisances, r));
    Rng rng(derive_seed(seed, id));
    est.se = bootstrap_mean_sd(scores, replicates, rng);
    est.se_available = true;
    est.significant_95 = std::abs(est.tau_hat) > 1.96 * est.se;
  });
  return tree;
}

EstimatedTree estimate_with_se(const RegressionTree& tree, const Dataset& d, std::span<const std::size_t> est_rows,
                               const NuisanceValues& nuisances, std::size_t replicates, std::uint64_t seed) {
  return bootstrap_se(estimate_leaves(tree, d, est_rows, nuisances), d, est_rows, nuisances, replicates, seed);
}

DctPrediction predict_dct(const EstimatedTree& tree, const Matrix& x, UnavailablePolicy policy) {
  if (x.cols() != tree.structure.num_features()) {
    throw std::invalid_argument("predict_dct: expected " + std::to_string(tree.structure.num_features()) +
                                " columns, got " + std::to_string(x.cols()));
  }
  DctPrediction out;
  out.tau_hat.resize(x.rows());
  out.se.resize(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto path = tree.structure.path(x.row(i));
    std::size_t id = path.back();
    if (!tree.estimates[id].available) {
      if (policy == UnavailablePolicy::error) {
        throw DataError("predict_dct: row " + std::to_string(i) + " reaches node " + std::to_string(id) +
                        " which has no estimate");
      }
      auto it = std::find_if(path.rbegin(), path.rend(),
                             [&](std::size_t node) { return tree.estimates[node].available; });
      if (it == path.rend()) throw DataError("predict_dct: no node on the path has an estimate");
      id = *it;
    }
    out.tau_hat[i] = tree.estimates[id].tau_hat;
    out.se[i] = tree.estimates[id].se;
  }
  return out;
}

}  // namespace dct

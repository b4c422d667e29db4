#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace dct::testing {

// Penalized loss computed from leaf memberships, independent of the library.
inline double oracle_loss(const std::vector<std::vector<double>>& leaves, double alpha) {
  double n = 0, sse = 0;
  for (const auto& leaf : leaves) {
    double s = 0;
    for (double v : leaf) s += v;
    const double m = s / static_cast<double>(leaf.size());
    for (double v : leaf) sse += (v - m) * (v - m);
    n += static_cast<double>(leaf.size());
  }
  const double mse = std::max(sse / n, 1e-12);
  return n * std::log(mse) + alpha * 4.0 * (static_cast<double>(leaves.size()) + 1.0) * std::log(n);
}

// Exhaustive optimum over all single-feature threshold trees of depth <= 2.
inline double brute_force_depth2(const std::vector<double>& x, const std::vector<double>& t, std::size_t min_leaf,
                                 double alpha) {
  std::vector<double> values = x;
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> cuts;
  for (std::size_t k = 0; k + 1 < values.size(); ++k) cuts.push_back(0.5 * (values[k] + values[k + 1]));
  auto members = [&](double lo, double hi) {
    std::vector<double> out;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > lo && x[i] <= hi) out.push_back(t[i]);
    }
    return out;
  };
  const double inf = std::numeric_limits<double>::infinity();
  double best = oracle_loss({t}, alpha);
  // Every depth<=2 tree on one feature partitions the line into 2, 3 or 4 intervals.
  std::vector<std::vector<double>> partitions;
  for (std::size_t a = 0; a < cuts.size(); ++a) {
    partitions.push_back({cuts[a]});
    for (std::size_t b = 0; b < cuts.size(); ++b) {
      if (b < a) partitions.push_back({cuts[b], cuts[a]});
      if (b > a) partitions.push_back({cuts[a], cuts[b]});
      for (std::size_t c = b + 1; c < cuts.size(); ++c) {
        if (b < a && c > a) partitions.push_back({cuts[b], cuts[a], cuts[c]});
      }
    }
  }
  for (const auto& cut : partitions) {
    std::vector<std::vector<double>> leaves;
    double lo = -inf;
    bool ok = true;
    for (std::size_t k = 0; k <= cut.size(); ++k) {
      const double hi = k < cut.size() ? cut[k] : inf;
      leaves.push_back(members(lo, hi));
      if (leaves.back().size() < min_leaf) ok = false;
      lo = hi;
    }
    if (ok) best = std::min(best, oracle_loss(leaves, alpha));
  }
  return best;
}

}  // namespace dct::testing

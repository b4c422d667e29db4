#include "dct/regression_forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dct {

void ForestParams::validate() const {
  if (num_trees == 0) throw std::invalid_argument("ForestParams: num_trees must be >= 1");
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
    throw std::invalid_argument("ForestParams: subsample_fraction must lie in (0, 1]");
  }
  if (min_leaf == 0) throw std::invalid_argument("ForestParams: min_leaf must be >= 1");
}

bool SubsampledTree::contains(std::size_t row) const {
  return std::binary_search(subsample.begin(), subsample.end(), row);
}

TrainingFingerprint TrainingFingerprint::of(const Matrix& x) {
  const double shape[2] = {static_cast<double>(x.rows()), static_cast<double>(x.cols())};
  return {x.rows(), x.cols(), hash_doubles(x.data(), hash_doubles(shape))};
}

std::size_t OobPrediction::flagged_count() const {
  return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), std::uint8_t{1}));
}

RegressionForest fit_regression_forest(const Matrix& x, std::span<const double> target, const ForestParams& params,
                                       std::string target_name, std::span<const std::size_t> rows) {
  params.validate();
  if (target.size() != x.rows()) throw std::invalid_argument("fit_regression_forest: target length mismatch");
  std::vector<std::size_t> pool(rows.begin(), rows.end());
  if (pool.empty()) {
    pool.resize(x.rows());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  }
  if (pool.size() < 2 * params.min_leaf) {
    throw DataError("fit_regression_forest(" + target_name + "): " + std::to_string(pool.size()) +
                    " rows is fewer than 2 * min_leaf");
  }

  RegressionForest forest;
  forest.params = params;
  forest.target_name = std::move(target_name);
  forest.fingerprint = TrainingFingerprint::of(x);
  double sum = 0.0;
  for (std::size_t r : pool) sum += target[r];
  forest.training_mean = sum / static_cast<double>(pool.size());
  forest.constant_target = std::all_of(pool.begin(), pool.end(), [&](std::size_t r) {
    return target[r] == target[pool.front()];
  });

  detail::GrowOptions options;
  options.max_depth = params.max_depth;
  options.min_leaf = params.min_leaf;
  options.mtry = params.mtry > 0 ? params.mtry
                                 : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
  const auto sample_size = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(params.subsample_fraction * static_cast<double>(pool.size()))));

  forest.trees.resize(params.num_trees);
  parallel_for(params.num_trees, [&](std::size_t t) {
    Rng rng(derive_seed(params.seed, t));
    std::vector<std::size_t> sample = pool;
    for (std::size_t i = 0; i < sample_size; ++i) {
      std::swap(sample[i], sample[i + uniform_index(rng, sample.size() - i)]);
    }
    sample.resize(sample_size);
    std::sort(sample.begin(), sample.end());
    forest.trees[t].tree = detail::grow_cart(x, target, sample, options, &rng);
    forest.trees[t].subsample = std::move(sample);
  });
  return forest;
}

RegressionForest fit_regression_forest(const Dataset& d, ForestTarget target, const ForestParams& params) {
  if (target == ForestTarget::outcome) return fit_regression_forest(d.x, d.y, params, "y");
  const auto w = d.w_as_double();
  return fit_regression_forest(d.x, w, params, "w");
}

OobPrediction predict_oob(const RegressionForest& forest, const Matrix& x) {
  if (!(TrainingFingerprint::of(x) == forest.fingerprint)) {
    throw DataError("predict_oob: data does not match the forest's training fingerprint");
  }
  const std::size_t n = x.rows();
  OobPrediction out;
  out.values.assign(n, 0.0);
  out.flagged.assign(n, 0);
  std::vector<std::size_t> counts(n, 0);
  // Trees in order so the floating-point sum is scheduling independent.
  for (const auto& st : forest.trees) {
    auto in_sample = st.subsample.begin();
    for (std::size_t i = 0; i < n; ++i) {
      while (in_sample != st.subsample.end() && *in_sample < i) ++in_sample;
      if (in_sample != st.subsample.end() && *in_sample == i) continue;
      out.values[i] += st.tree.predict(x.row(i));
      ++counts[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] == 0) {
      out.values[i] = forest.training_mean;
      out.flagged[i] = 1;
    } else {
      out.values[i] /= static_cast<double>(counts[i]);
    }
  }
  return out;
}

std::vector<double> predict(const RegressionForest& forest, const Matrix& x) {
  if (x.cols() != forest.fingerprint.p) {
    throw std::invalid_argument("predict: expected " + std::to_string(forest.fingerprint.p) + " columns, got " +
                                std::to_string(x.cols()));
  }
  std::vector<double> out(x.rows(), 0.0);
  for (const auto& st : forest.trees) {
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] += st.tree.predict(x.row(i));
  }
  for (double& v : out) v /= static_cast<double>(forest.trees.size());
  return out;
}

std::vector<double> clip_propensity(std::vector<double> e) {
  for (double& v : e) v = std::clamp(v, kPropensityLower, kPropensityUpper);
  return e;
}

}  // namespace dct

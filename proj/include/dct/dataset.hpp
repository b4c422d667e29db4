#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dct/common.hpp"

namespace dct {

/// Covariates, outcome, binary treatment and (for synthetic data) the true
/// per-row treatment effect. Immutable once validated.
struct Dataset {
  Matrix x;
  std::vector<double> y;
  std::vector<int> w;
  std::optional<std::vector<double>> tau_true;
  std::vector<std::string> feature_names;

  std::size_t rows() const { return x.rows(); }
  std::size_t cols() const { return x.cols(); }

  /// Throws DataError on shape mismatch, non-finite values, non-binary w or
  /// duplicate feature names.
  void validate() const;
  /// Throws DataError unless both treatment arms are present.
  void require_both_arms() const;

  std::vector<double> w_as_double() const;
  std::size_t treated_count() const;

  Dataset subset(std::span<const std::size_t> rows) const;

  /// Identity of the covariate matrix, used to check that OOB predictions are
  /// requested on the training data.
  std::uint64_t fingerprint() const;

  bool operator==(const Dataset&) const = default;
};

/// Name of the ground-truth column written by write_csv.
inline constexpr const char* kTauColumn = "tau_true";

/// Column roles for CSV ingestion. When `covariates` is empty every column not
/// otherwise mapped becomes a covariate, in alphabetical order.
struct ColumnMapping {
  std::string outcome = "y";
  std::string treatment = "w";
  /// Column holding the true effect. When neither this nor
  /// potential_outcomes is set, a column named tau_true is used if present
  /// (unless dropped or listed as a covariate).
  std::optional<std::string> tau;
  /// Alternatively a pair of potential-outcome means (mu1, mu0); tau = mu1 - mu0.
  std::optional<std::pair<std::string, std::string>> potential_outcomes;
  std::vector<std::string> covariates;
  /// Columns to ignore entirely.
  std::vector<std::string> drop;
};

Dataset load_csv(const std::filesystem::path& path, const ColumnMapping& mapping = {});
/// Writes y, w, optional tau_true, then covariates, at 17 significant digits.
/// Reading the file back with the default mapping reproduces the dataset.
void write_csv(const Dataset& d, const std::filesystem::path& path);

struct SplitFractions {
  double fit = 0.5;
  double est = 0.5;
  double test = 0.0;
};

struct SampleSplit {
  std::vector<std::size_t> fit_indices;
  std::vector<std::size_t> est_indices;
  std::vector<std::size_t> test_indices;
  std::uint64_t seed = 0;
};

/// Seeded shuffle of 0..n-1 sliced contiguously into fit / est / test.
SampleSplit split_honest(std::size_t n, SplitFractions fractions, std::uint64_t seed,
                         std::size_t min_size = 50);
inline SampleSplit split_honest(const Dataset& d, SplitFractions fractions, std::uint64_t seed,
                                std::size_t min_size = 50) {
  return split_honest(d.rows(), fractions, seed, min_size);
}

struct NoiseSpec {
  std::size_t n_noise = 20;
  std::size_t n_corr = 10;
  double rho = 0.9;
  std::uint64_t seed = 0;
  /// n_corr may not exceed this multiple of the original covariate count.
  std::size_t max_corr_multiple = 10;
};

/// Appends n_noise standard-normal columns ("noise_k") and n_corr columns
/// rho * standardize(z) + sqrt(1 - rho^2) * eps, each built from a randomly
/// chosen original column z ("corr_k_of_<z>"). y, w and tau_true are untouched.
Dataset inject_noise(const Dataset& d, const NoiseSpec& spec);

}  // namespace dct

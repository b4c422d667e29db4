#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dct {

using Rng = std::mt19937_64;

/// Raised for malformed or inconsistent input data (bad CSV cells, arm
/// emptiness, fingerprint mismatches). Contract violations on parameters use
/// std::invalid_argument.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> column(std::size_t c) const;
  Matrix select_rows(std::span<const std::size_t> rows) const;
  /// Returns a copy with `extra` appended as new trailing columns.
  Matrix append_columns(const std::vector<std::vector<double>>& extra) const;

  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Mixes a base seed with a stream index into an independent 64-bit seed
/// (splitmix64 finalizer). Used to give every tree / individual / node its own
/// RNG so results do not depend on scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b);

/// Uniform integer in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);
double uniform01(Rng& rng);

/// FNV-1a over the raw bytes of a double sequence.
std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t h = 14695981039346656037ULL);

double mean(std::span<const double> v);
double variance(std::span<const double> v);  // sample variance (n - 1)

// Thread cap shared by every parallel section. 0 means hardware concurrency.
void set_num_threads(unsigned n);
unsigned num_threads();

/// Runs fn(i) for i in [0, n) on up to num_threads() workers. fn must only
/// write to per-index state; the first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dct

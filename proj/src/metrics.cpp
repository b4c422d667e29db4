#include "dct/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace dct {

double mae_truth(std::span<const double> pred, std::span<const double> tau_true) {
  if (pred.size() != tau_true.size()) throw std::invalid_argument("mae_truth: length mismatch");
  if (pred.empty()) throw std::invalid_argument("mae_truth: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred[i] - tau_true[i]);
  return total / static_cast<double>(pred.size());
}

double r_loss(std::span<const double> pred, std::span<const double> y, std::span<const double> w,
              std::span<const double> m_hat, std::span<const double> e_hat) {
  const std::size_t n = pred.size();
  if (y.size() != n || w.size() != n || m_hat.size() != n || e_hat.size() != n) {
    throw std::invalid_argument("r_loss: length mismatch");
  }
  if (n == 0) throw std::invalid_argument("r_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (y[i] - m_hat[i]) - (w[i] - e_hat[i]) * pred[i];
    total += r * r;
  }
  return total / static_cast<double>(n);
}

}  // namespace dct

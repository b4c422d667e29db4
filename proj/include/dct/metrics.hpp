#pragma once

#include <span>

namespace dct {

/// Mean absolute error against the ground-truth effects.
double mae_truth(std::span<const double> pred, std::span<const double> tau_true);

/// R-learner loss: mean of [(y - m) - (w - e) * pred]^2, with m and e
/// out-of-fold nuisance predictions for the same rows.
double r_loss(std::span<const double> pred, std::span<const double> y, std::span<const double> w,
              std::span<const double> m_hat, std::span<const double> e_hat);

}  // namespace dct

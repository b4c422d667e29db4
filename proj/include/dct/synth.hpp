#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dct/dataset.hpp"

namespace dct {

/// Synthetic data-generating process with a known effect surface.
///
/// X ~ iid N(0, 1); W ~ Bernoulli(e(x)); Y = m(x) + (W - 0.5) * tau(x) + N(0, noise_sd).
/// The baseline m(x) = x2 + 0.5 * sin(pi * x1) is shared by every effect
/// function. Covariate, treatment and outcome-noise draws come from separate
/// RNG streams so forcing the treatment leaves all other draws unchanged.
struct DgpSpec {
  std::string name = "dgp";
  std::size_t n = 2000;
  std::size_t p = 10;
  /// One of tau_functions().
  std::string tau_fn = "step";
  double noise_sd = 1.0;
  /// Constant treatment probability in (0, 1), or the name of a built-in
  /// propensity function ("constant", "confounded").
  std::variant<double, std::string> propensity = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

const std::vector<std::string>& tau_functions();

double tau_value(const std::string& tau_fn, std::span<const double> x);
double baseline_value(std::span<const double> x);
double propensity_value(const DgpSpec& spec, std::span<const double> x);

/// `forced_treatment` fixes every W to 0 or 1 without disturbing other draws.
Dataset generate(const DgpSpec& spec, std::optional<int> forced_treatment = std::nullopt);

}  // namespace dct

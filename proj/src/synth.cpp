#include "dct/synth.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dct {

namespace {
enum Stream : std::uint64_t { kCovariates = 1, kTreatment = 2, kOutcomeNoise = 3 };
}

const std::vector<std::string>& tau_functions() {
  static const std::vector<std::string> names = {"zero", "step", "linear", "interaction"};
  return names;
}

double tau_value(const std::string& tau_fn, std::span<const double> x) {
  if (tau_fn == "zero") return 0.0;
  if (tau_fn == "step") return x[0] > 0.0 ? 1.0 : -1.0;
  if (tau_fn == "linear") return x[0];
  if (tau_fn == "interaction") return (x[0] > 0.0 && x[1] > 0.0) ? 2.0 : 0.0;
  throw std::invalid_argument("unknown tau_fn '" + tau_fn + "'");
}

double baseline_value(std::span<const double> x) {
  return x[1] + 0.5 * std::sin(std::numbers::pi * x[0]);
}

double propensity_value(const DgpSpec& spec, std::span<const double> x) {
  if (const auto* constant = std::get_if<double>(&spec.propensity)) return *constant;
  const auto& name = std::get<std::string>(spec.propensity);
  if (name == "constant") return 0.5;
  if (name == "confounded") {
    // Treatment more likely where the baseline is high; bounded in [0.2, 0.8].
    return 0.2 + 0.6 / (1.0 + std::exp(-baseline_value(x)));
  }
  throw std::invalid_argument("unknown propensity function '" + name + "'");
}

void DgpSpec::validate() const {
  if (n < 100) throw std::invalid_argument("DgpSpec: n must be at least 100");
  if (p < 2) throw std::invalid_argument("DgpSpec: p must be at least 2");
  if (!std::isfinite(noise_sd) || noise_sd < 0.0) {
    throw std::invalid_argument("DgpSpec: noise_sd must be finite and non-negative");
  }
  bool known = false;
  for (const auto& name : tau_functions()) known = known || name == tau_fn;
  if (!known) throw std::invalid_argument("DgpSpec: unknown tau_fn '" + tau_fn + "'");
  if (const auto* constant = std::get_if<double>(&propensity)) {
    if (!(*constant > 0.0 && *constant < 1.0)) {
      throw std::invalid_argument("DgpSpec: constant propensity must lie in (0, 1)");
    }
  } else {
    const auto& name = std::get<std::string>(propensity);
    if (name != "constant" && name != "confounded") {
      throw std::invalid_argument("DgpSpec: unknown propensity function '" + name + "'");
    }
  }
}

Dataset generate(const DgpSpec& spec, std::optional<int> forced_treatment) {
  spec.validate();
  if (forced_treatment && *forced_treatment != 0 && *forced_treatment != 1) {
    throw std::invalid_argument("generate: forced treatment must be 0 or 1");
  }
  Rng x_rng(derive_seed(spec.seed, kCovariates));
  Rng w_rng(derive_seed(spec.seed, kTreatment));
  Rng noise_rng(derive_seed(spec.seed, kOutcomeNoise));
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset d;
  d.x = Matrix(spec.n, spec.p);
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (std::size_t j = 0; j < spec.p; ++j) d.x(i, j) = normal(x_rng);
  }
  d.y.resize(spec.n);
  d.w.resize(spec.n);
  std::vector<double> tau(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const auto row = d.x.row(i);
    const double u = uniform01(w_rng);
    const double eps = normal(noise_rng);
    const int w = forced_treatment ? *forced_treatment : (u < propensity_value(spec, row) ? 1 : 0);
    tau[i] = tau_value(spec.tau_fn, row);
    d.w[i] = w;
    d.y[i] = baseline_value(row) + (w - 0.5) * tau[i] + spec.noise_sd * eps;
  }
  d.tau_true = std::move(tau);
  for (std::size_t j = 0; j < spec.p; ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  return d;
}

}  // namespace dct

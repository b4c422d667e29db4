#include <cmath>

#include "doctest.h"
#include "dct/synth.hpp"

using namespace dct;

TEST_SUITE("synth") {
  TEST_CASE("step effect is balanced") {
    DgpSpec spec;
    spec.n = 10000;
    spec.tau_fn = "step";
    spec.seed = 1;
    const Dataset d = generate(spec);
    REQUIRE(d.tau_true);
    CHECK(std::abs(mean(*d.tau_true)) <= 0.05);
    for (std::size_t i = 0; i < d.rows(); ++i) CHECK(std::abs((*d.tau_true)[i]) == 1.0);
  }

  TEST_CASE("effect functions match their definitions") {
    const std::vector<double> a{0.5, 0.7}, b{-0.5, 0.7}, c{0.5, -0.1};
    CHECK(tau_value("zero", a) == 0.0);
    CHECK(tau_value("step", a) == 1.0);
    CHECK(tau_value("step", b) == -1.0);
    CHECK(tau_value("linear", b) == -0.5);
    CHECK(tau_value("interaction", a) == 2.0);
    CHECK(tau_value("interaction", c) == 0.0);
    CHECK_THROWS(tau_value("nope", a));
  }

  TEST_CASE("forcing the arm changes only treatment and outcome by the effect") {
    DgpSpec spec;
    spec.n = 500;
    spec.tau_fn = "linear";
    spec.seed = 4;
    const Dataset treated = generate(spec, 1);
    const Dataset control = generate(spec, 0);
    CHECK(treated.x == control.x);
    for (std::size_t i = 0; i < spec.n; ++i) {
      CHECK(treated.w[i] == 1);
      CHECK(control.w[i] == 0);
      CHECK(treated.y[i] - control.y[i] == doctest::Approx((*treated.tau_true)[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("generation is seed-deterministic") {
    DgpSpec spec;
    spec.seed = 8;
    CHECK(generate(spec) == generate(spec));
    DgpSpec other = spec;
    other.seed = 9;
    CHECK_FALSE(generate(spec) == generate(other));
  }

  TEST_CASE("confounded propensity stays inside (0.2, 0.8)") {
    DgpSpec spec;
    spec.propensity = std::string("confounded");
    const std::vector<double> lo{-3.0, -10.0}, hi{3.0, 10.0};
    CHECK(propensity_value(spec, lo) > 0.2);
    CHECK(propensity_value(spec, hi) < 0.8);
  }

  TEST_CASE("spec validation") {
    DgpSpec spec;
    spec.n = 50;
    CHECK_THROWS(spec.validate());
    spec.n = 200;
    spec.p = 1;
    CHECK_THROWS(spec.validate());
    spec.p = 3;
    spec.propensity = 1.0;
    CHECK_THROWS(spec.validate());
  }
}

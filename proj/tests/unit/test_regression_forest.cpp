#include <cmath>

#include "doctest.h"
#include "dct/regression_forest.hpp"
#include "dct/synth.hpp"

using namespace dct;

TEST_SUITE("regression_forest") {
  TEST_CASE("out-of-bag prediction only uses trees that did not see the row") {
    DgpSpec spec;
    spec.n = 300;
    spec.p = 4;
    spec.seed = 3;
    const Dataset d = generate(spec);
    ForestParams fp;
    fp.num_trees = 40;
    fp.seed = 5;
    const RegressionForest f = fit_regression_forest(d, ForestTarget::outcome, fp);
    const OobPrediction oob = predict_oob(f, d.x);
    for (std::size_t i = 0; i < d.rows(); ++i) {
      double sum = 0;
      std::size_t count = 0;
      for (const auto& t : f.trees) {
        if (t.contains(i)) continue;
        sum += t.tree.predict(d.x.row(i));
        ++count;
      }
      if (count == 0) {
        CHECK(oob.flagged[i] == 1);
        CHECK(oob.values[i] == f.training_mean);
      } else {
        CHECK(oob.flagged[i] == 0);
        CHECK(oob.values[i] == doctest::Approx(sum / static_cast<double>(count)).epsilon(1e-12));
      }
    }
    for (const auto& t : f.trees) CHECK(t.subsample.size() == 150);
  }

  TEST_CASE("single tree forest flags in-bag rows") {
    DgpSpec spec;
    spec.n = 200;
    spec.p = 3;
    const Dataset d = generate(spec);
    ForestParams fp;
    fp.num_trees = 1;
    const RegressionForest f = fit_regression_forest(d, ForestTarget::outcome, fp);
    const OobPrediction oob = predict_oob(f, d.x);
    CHECK(oob.flagged_count() == 100);
  }

  TEST_CASE("out-of-bag prediction requires the training matrix") {
    DgpSpec spec;
    spec.n = 200;
    spec.p = 3;
    const Dataset d = generate(spec);
    ForestParams fp;
    fp.num_trees = 5;
    const RegressionForest f = fit_regression_forest(d, ForestTarget::treatment, fp);
    Matrix other = d.x;
    other(0, 0) += 1.0;
    CHECK_THROWS_AS(predict_oob(f, other), DataError);
    CHECK(predict(f, other).size() == 200);
  }

  TEST_CASE("results do not depend on the thread count") {
    DgpSpec spec;
    spec.n = 400;
    spec.p = 5;
    spec.seed = 12;
    const Dataset d = generate(spec);
    ForestParams fp;
    fp.num_trees = 30;
    fp.seed = 77;
    set_num_threads(1);
    const auto a = predict_oob(fit_regression_forest(d, ForestTarget::outcome, fp), d.x).values;
    set_num_threads(4);
    const auto b = predict_oob(fit_regression_forest(d, ForestTarget::outcome, fp), d.x).values;
    set_num_threads(0);
    CHECK(a == b);
  }

  TEST_CASE("forest recovers a smooth signal") {
    DgpSpec spec;
    spec.n = 2000;
    spec.p = 4;
    spec.noise_sd = 0.5;
    spec.tau_fn = "zero";
    spec.seed = 2;
    const Dataset d = generate(spec);
    ForestParams fp;
    fp.num_trees = 100;
    const RegressionForest f = fit_regression_forest(d, ForestTarget::outcome, fp);
    const auto oob = predict_oob(f, d.x).values;
    double err = 0, base = 0;
    const double ybar = mean(d.y);
    for (std::size_t i = 0; i < d.rows(); ++i) {
      err += (oob[i] - d.y[i]) * (oob[i] - d.y[i]);
      base += (ybar - d.y[i]) * (ybar - d.y[i]);
    }
    CHECK(err < 0.5 * base);
  }

  TEST_CASE("constant target and propensity clipping") {
    Matrix x(50, 2);
    for (std::size_t i = 0; i < 50; ++i) x(i, 0) = static_cast<double>(i);
    const std::vector<double> ones(50, 1.0);
    ForestParams fp;
    fp.num_trees = 3;
    const RegressionForest f = fit_regression_forest(x, ones, fp, "ones");
    CHECK(f.constant_target);
    for (double v : predict(f, x)) CHECK(v == 1.0);
    const auto c = clip_propensity({0.0, 0.5, 1.0});
    CHECK(c == std::vector<double>{0.01, 0.5, 0.99});
  }

  TEST_CASE("parameter validation") {
    ForestParams fp;
    fp.num_trees = 0;
    CHECK_THROWS(fp.validate());
    fp.num_trees = 1;
    fp.subsample_fraction = 1.5;
    CHECK_THROWS(fp.validate());
  }
}

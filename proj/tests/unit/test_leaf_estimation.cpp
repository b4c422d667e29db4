#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dct/leaf_estimation.hpp"
#include "dct/synth.hpp"

using namespace dct;

namespace {

NuisanceValues constant_nuisances(std::size_t n, double e) {
  return {std::vector<double>(n, 0.0), std::vector<double>(n, e), std::vector<double>(n, 0.0),
          std::vector<double>(n, 0.0)};
}

Dataset make_random_data(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::normal_distribution<double> z;
  Dataset d;
  d.x = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    d.x(i, 0) = z(rng);
    d.x(i, 1) = z(rng);
    d.w.push_back(uniform01(rng) < 0.4 ? 1 : 0);
    d.y.push_back(z(rng) + d.w.back() * 0.7);
  }
  d.w[0] = 1;
  d.w[1] = 0;
  d.feature_names = {"a", "b"};
  return d;
}

RegressionTree two_level_tree() {
  return RegressionTree(2, 0.0).with_split(0, 0, 0.0).with_split(2, 1, 0.3).with_split(1, 1, -0.2);
}

}  // namespace

TEST_SUITE("leaf_estimation") {
  TEST_CASE("two-row node reduces to the difference in means") {
    CHECK(aipw_score(3, 1, 0.5, 0, 0) == 6.0);
    CHECK(aipw_score(1, 0, 0.5, 0, 0) == -2.0);
    Dataset d;
    d.x = Matrix(2, 1, {0.0, 1.0});
    d.y = {3, 1};
    d.w = {1, 0};
    d.feature_names = {"x"};
    const EstimatedTree et = estimate_leaves(RegressionTree(1, 0.0), d, constant_nuisances(2, 0.5));
    CHECK(et.estimates[0].tau_hat == 2.0);
    CHECK(et.estimates[0].n_treated == 1);
    CHECK(et.estimates[0].n_control == 1);
  }

  TEST_CASE("propensity is clipped inside the score") {
    CHECK(aipw_score(1, 1, 0.0, 0, 0) == doctest::Approx(1.0 / 0.01));
    CHECK(aipw_score(1, 0, 1.0, 0, 0) == doctest::Approx(-1.0 / 0.01));
  }

  TEST_CASE("with the node treated share as propensity every node is a difference in means") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Dataset d = make_random_data(seed, 60);
      const RegressionTree tree = two_level_tree();
      const EstimatedTree probe = estimate_leaves(tree, d, constant_nuisances(60, 0.5));
      for (std::size_t id = 0; id < tree.size(); ++id) {
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < d.rows(); ++r) {
          const auto path = tree.path(d.x.row(r));
          if (std::find(path.begin(), path.end(), id) != path.end()) rows.push_back(r);
        }
        double st = 0, sc = 0, nt = 0, nc = 0;
        for (std::size_t r : rows) {
          if (d.w[r] == 1) {
            st += d.y[r];
            ++nt;
          } else {
            sc += d.y[r];
            ++nc;
          }
        }
        if (nt == 0 || nc == 0) {
          CHECK_FALSE(probe.estimates[id].available);
          continue;
        }
        const double share = nt / (nt + nc);
        const EstimatedTree et = estimate_leaves(tree, d, rows, constant_nuisances(60, share));
        CHECK(std::abs(et.estimates[id].tau_hat - (st / nt - sc / nc)) <= 1e-12);
      }
    }
  }

  TEST_CASE("perfect nuisances on noiseless step data give the exact effect") {
    DgpSpec spec;
    spec.n = 400;
    spec.noise_sd = 0.0;
    spec.seed = 3;
    const Dataset d = generate(spec);
    NuisanceValues nu;
    for (std::size_t i = 0; i < d.rows(); ++i) {
      const double m = baseline_value(d.x.row(i));
      const double tau = (*d.tau_true)[i];
      nu.m.push_back(m);
      nu.e.push_back(0.5);
      nu.mu0.push_back(m - 0.5 * tau);
      nu.mu1.push_back(m + 0.5 * tau);
    }
    const RegressionTree tree = RegressionTree(d.cols(), 0.0).with_split(0, 0, 0.0);
    const EstimatedTree et = estimate_leaves(tree, d, nu);
    CHECK(et.estimates[2].tau_hat == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(et.estimates[1].tau_hat == doctest::Approx(-1.0).epsilon(1e-12));
  }

  TEST_CASE("parent estimates are count-weighted means of their children") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Dataset d = make_random_data(seed, 200);
      NuisanceValues nu = constant_nuisances(200, 0.4);
      Rng rng(seed);
      for (std::size_t i = 0; i < 200; ++i) {
        nu.e[i] = 0.2 + 0.6 * uniform01(rng);
        nu.mu0[i] = uniform01(rng);
        nu.mu1[i] = uniform01(rng);
      }
      const EstimatedTree et = estimate_leaves(two_level_tree(), d, nu);
      for (std::size_t id = 0; id < et.structure.size(); ++id) {
        const TreeNode& n = et.structure.node(id);
        if (n.is_leaf()) continue;
        const auto& p = et.estimates[id];
        const auto& l = et.estimates[static_cast<std::size_t>(n.left)];
        const auto& r = et.estimates[static_cast<std::size_t>(n.right)];
        CHECK(p.n_node == l.n_node + r.n_node);
        if (!(p.available && l.available && r.available)) continue;
        const double weighted = (l.tau_hat * l.n_node + r.tau_hat * r.n_node) / static_cast<double>(p.n_node);
        CHECK(p.tau_hat == doctest::Approx(weighted).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("node without controls is unavailable and leaves its parent alone") {
    Dataset d;
    d.x = Matrix(6, 1, {0, 1, 2, 3, 4, 5});
    d.y = {1, 2, 3, 4, 5, 6};
    d.w = {1, 0, 1, 0, 1, 1};
    d.feature_names = {"x"};
    const RegressionTree tree = RegressionTree(1, 0.0).with_split(0, 0, 3.5);
    const EstimatedTree et = estimate_leaves(tree, d, constant_nuisances(6, 0.5));
    CHECK(et.estimates[0].available);
    CHECK(et.estimates[1].available);
    CHECK_FALSE(et.estimates[2].available);
    CHECK(et.estimates[2].tau_hat == 0.0);
    const EstimatedTree root_only = estimate_leaves(RegressionTree(1, 0.0), d, constant_nuisances(6, 0.5));
    CHECK(et.estimates[0].tau_hat == root_only.estimates[0].tau_hat);
    Matrix x(1, 1, {5.0});
    CHECK_THROWS_AS(predict_dct(et, x), DataError);
    CHECK(predict_dct(et, x, UnavailablePolicy::nearest_ancestor).tau_hat[0] == et.estimates[0].tau_hat);
  }

  TEST_CASE("estimates ignore rows outside the estimation sample") {
    const Dataset d = make_random_data(4, 100);
    std::vector<std::size_t> est(50);
    std::iota(est.begin(), est.end(), std::size_t{50});
    const NuisanceValues nu = constant_nuisances(100, 0.4);
    const EstimatedTree a = estimate_with_se(two_level_tree(), d, est, nu, 50, 1);
    Dataset scrambled = d;
    Rng rng(8);
    for (std::size_t r = 0; r < 50; ++r) scrambled.y[r] = std::normal_distribution<double>(0, 100)(rng);
    std::shuffle(scrambled.y.begin(), scrambled.y.begin() + 50, rng);
    const EstimatedTree b = estimate_with_se(two_level_tree(), scrambled, est, nu, 50, 1);
    CHECK(a == b);
  }

  TEST_CASE("bootstrap of a two-row node matches exhaustive enumeration") {
    // Resamples of {6, -2}: (6,6) (6,-2) (-2,6) (-2,-2), means {6, 2, 2, -2}.
    const std::vector<double> means{6, 2, 2, -2};
    double mu = 0;
    for (double m : means) mu += m / 4;
    double var = 0;
    for (double m : means) var += (m - mu) * (m - mu) / 4;
    const double exact = std::sqrt(var);
    CHECK(exact == doctest::Approx(2.0 * std::sqrt(2.0)));
    const std::vector<double> scores{6, -2};
    Rng rng(17);
    CHECK(bootstrap_mean_sd(scores, 200000, rng) == doctest::Approx(exact).epsilon(0.01));
  }

  TEST_CASE("constant scores give exactly zero standard error") {
    const std::vector<double> scores(37, 1.2345678);
    Rng rng(1);
    CHECK(bootstrap_mean_sd(scores, 500, rng) == 0.0);
    Dataset d;
    d.x = Matrix(4, 1, {0, 1, 2, 3});
    d.y = {2, -2, 2, -2};
    d.w = {1, 0, 1, 0};
    d.feature_names = {"x"};
    // psi = 4 for every row
    const EstimatedTree et = estimate_with_se(RegressionTree(1, 0.0), d, std::vector<std::size_t>{0, 1, 2, 3},
                                              constant_nuisances(4, 0.5), 100, 3);
    CHECK(et.estimates[0].tau_hat == 4.0);
    CHECK(et.estimates[0].se == 0.0);
    CHECK(et.estimates[0].se_available);
    CHECK(et.estimates[0].significant_95);
  }

  TEST_CASE("standard error shrinks like one over root n") {
    int inside = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng gen(seed);
      std::normal_distribution<double> z;
      std::vector<double> big(800);
      for (double& v : big) v = z(gen);
      const std::span<const double> small(big.data(), 400);
      Rng r1(derive_seed(seed, 1)), r2(derive_seed(seed, 2));
      const double ratio = bootstrap_mean_sd(big, 500, r2) / bootstrap_mean_sd(small, 500, r1);
      if (ratio >= 0.6 && ratio <= 0.82) ++inside;
    }
    CHECK(inside == 20);
  }

  TEST_CASE("bootstrap is deterministic and thread independent") {
    const Dataset d = make_random_data(6, 300);
    const NuisanceValues nu = constant_nuisances(300, 0.4);
    std::vector<std::size_t> rows(300);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    set_num_threads(1);
    const EstimatedTree a = estimate_with_se(two_level_tree(), d, rows, nu, 200, 5);
    set_num_threads(4);
    const EstimatedTree b = estimate_with_se(two_level_tree(), d, rows, nu, 200, 5);
    set_num_threads(0);
    CHECK(a == b);
    for (const auto& e : a.estimates) {
      if (e.se_available) CHECK(e.significant_95 == (std::abs(e.tau_hat) > 1.96 * e.se));
    }
    CHECK_THROWS(bootstrap_se(a, d, rows, nu, 1, 0));
  }

  TEST_CASE("input validation") {
    const Dataset d = make_random_data(1, 20);
    CHECK_THROWS(estimate_leaves(RegressionTree(3, 0.0), d, constant_nuisances(20, 0.5)));
    CHECK_THROWS(estimate_leaves(RegressionTree(2, 0.0), d, constant_nuisances(19, 0.5)));
    CHECK_THROWS(estimate_leaves(RegressionTree(2, 0.0), d, std::vector<std::size_t>{}, constant_nuisances(20, 0.5)));
  }
}

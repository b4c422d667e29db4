#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "dct/evaluation.hpp"
#include "dct/metrics.hpp"
#include "dct/serialization.hpp"
#include "dct/synth.hpp"

using namespace dct;

namespace {

BenchmarkConfig small_config(const std::string& tau_fn = "step", std::size_t n = 600) {
  BenchmarkConfig c;
  DgpSpec spec;
  spec.name = tau_fn;
  spec.tau_fn = tau_fn;
  spec.n = n;
  spec.p = 4;
  c.sources = {{tau_fn, spec, {}, {}}};
  c.teacher.num_trees = 40;
  c.nuisance_trees = 30;
  c.evo.population_size = 20;
  c.evo.max_iterations = 200;
  c.evo.min_iterations = 50;
  c.evo.convergence_window = 20;
  c.evo.min_leaf = 20;
  c.greedy_min_leaf = 20;
  c.timing = false;
  c.noise.n_noise = 3;
  c.noise.n_corr = 2;
  return c;
}

std::string csv_of(const BenchmarkReport& report) {
  std::ostringstream out;
  for (const auto& r : report.rows) out << report_csv_row(r) << "\n";
  return out.str();
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("one source, one seed, teacher only gives one row") {
    BenchmarkConfig c = small_config();
    c.models = {Model::teacher};
    const BenchmarkReport report = run_benchmark(c);
    REQUIRE(report.rows.size() == 1);
    const BenchmarkRow& r = report.rows[0];
    CHECK(r.ok());
    CHECK(r.dgp == "step");
    CHECK(r.model == Model::teacher);
    REQUIRE(r.mae_truth);
    CHECK(std::isfinite(*r.mae_truth));
    CHECK(std::isfinite(r.r_loss));
    CHECK(r.runtime_seconds == 0.0);
  }

  TEST_CASE("all seven models report finite metrics in column order") {
    BenchmarkConfig c = small_config();
    c.variants = {Variant::regular, Variant::noisy};
    std::vector<CellKey> seen;
    const BenchmarkReport report =
        run_benchmark(c, [&](const CellKey& key, const std::vector<BenchmarkRow>& rows, const TreeHistogram*) {
          seen.push_back(key);
          CHECK(rows.size() == 7);
        });
    REQUIRE(report.rows.size() == 14);
    CHECK(seen.size() == 2);
    for (std::size_t k = 0; k < report.rows.size(); ++k) {
      const BenchmarkRow& r = report.rows[k];
      CHECK(r.model == all_models()[k % 7]);
      CHECK(r.variant == (k < 7 ? Variant::regular : Variant::noisy));
      CHECK_MESSAGE(r.ok(), r.error);
      REQUIRE(r.mae_truth);
      CHECK(std::isfinite(*r.mae_truth));
      CHECK(std::isfinite(r.r_loss));
    }
  }

  TEST_CASE("reports are deterministic given config and seeds") {
    BenchmarkConfig c = small_config();
    c.seeds = {3, 4};
    const std::string a = csv_of(run_benchmark(c));
    const std::string b = csv_of(run_benchmark(c));
    CHECK(a == b);
    set_num_threads(1);
    const std::string serial = csv_of(run_benchmark(c));
    set_num_threads(0);
    CHECK(a == serial);
  }

  TEST_CASE("completed cells are skipped") {
    BenchmarkConfig c = small_config();
    c.models = {Model::teacher};
    c.seeds = {0, 1, 2};
    c.skip = {{"step", Variant::regular, 1}};
    const BenchmarkReport report = run_benchmark(c);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].seed == 0);
    CHECK(report.rows[1].seed == 2);
  }

  TEST_CASE("histogram has one column per teacher tree and the mean tree is its row mean") {
    BenchmarkConfig c = small_config();
    c.keep_histograms = true;
    const CellResult cell = run_cell(c, c.sources[0], Variant::regular, 7);
    REQUIRE(cell.histogram);
    const TreeHistogram& h = *cell.histogram;
    CHECK(h.predictions.cols() == c.teacher.num_trees);
    CHECK(h.predictions.rows() == 300);
    CHECK(h.tau_true.size() == 300);
    const auto& mean_tree = cell.predictions[5];
    REQUIRE(cell.rows[5].model == Model::mean_tree);
    REQUIRE(mean_tree.size() == h.predictions.rows());
    for (std::size_t i = 0; i < mean_tree.size(); ++i) {
      double s = 0.0;
      for (std::size_t t = 0; t < h.predictions.cols(); ++t) s += h.predictions(i, t);
      CHECK(mean_tree[i] == doctest::Approx(s / static_cast<double>(h.predictions.cols())).epsilon(1e-12));
    }
    // The reported MAE is computed from the very same prediction vectors.
    for (std::size_t k = 0; k < cell.rows.size(); ++k) {
      REQUIRE(cell.rows[k].mae_truth);
      CHECK(*cell.rows[k].mae_truth == mae_truth(cell.predictions[k], h.tau_true));
    }
  }

  TEST_CASE("a failing model is isolated to its own row") {
    BenchmarkConfig c = small_config();
    c.evo.min_leaf = 100000;
    const BenchmarkReport report = run_benchmark(c);
    REQUIRE(report.rows.size() == 7);
    for (const auto& r : report.rows) {
      if (r.model == Model::optimal_dct) {
        CHECK_FALSE(r.ok());
        CHECK(r.error.find("min_leaf") != std::string::npos);
      } else {
        CHECK_MESSAGE(r.ok(), r.error);
      }
    }
    const std::string table = format_report_table(report.rows);
    CHECK(table.find("-!") != std::string::npos);
  }

  TEST_CASE("report CSV round trip keeps errors and absent truth") {
    std::vector<BenchmarkRow> rows(3);
    rows[0] = {"step", Variant::regular, Model::teacher, 0, 0.125, 1.5, 2.25, ""};
    rows[1] = {"step", Variant::noisy, Model::optimal_dct, 4, std::nullopt, 0.1 + 0.2, 0.0, ""};
    rows[2] = {"csvdata", Variant::regular, Model::mean_tree, 9, std::nullopt, 0.0, 3.0, "boom"};
    const auto dir = temp_dir("dct_eval_csv");
    write_report_csv(BenchmarkReport{rows, {}}, dir / "r.csv");
    const auto back = read_report_csv(dir / "r.csv");
    REQUIRE(back.size() == 3);
    CHECK(back[0].mae_truth == 0.125);
    CHECK(back[0].runtime_seconds == 2.25);
    CHECK_FALSE(back[1].mae_truth);
    CHECK(back[1].r_loss == 0.1 + 0.2);
    CHECK(back[1].variant == Variant::noisy);
    CHECK_FALSE(back[2].ok());
    CHECK(back[2].model == Model::mean_tree);
    CHECK(back[2].runtime_seconds == 3.0);
    CHECK(report_csv_row(rows[1]) == report_csv_row(back[1]));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("text table lists models in report order") {
    std::vector<BenchmarkRow> rows;
    for (Model m : {Model::basic_causal_tree, Model::teacher, Model::optimal_dct}) {
      for (std::uint64_t s : {0, 1}) rows.push_back({"step", Variant::regular, m, s, 0.5 + s, 1.0, 0.0, ""});
    }
    const std::string table = format_report_table(rows);
    const auto teacher = table.find("Teacher");
    const auto optimal = table.find("Optimal DCT");
    const auto basic = table.find("Basic causal tree");
    CHECK(teacher < optimal);
    CHECK(optimal < basic);
    CHECK(table.find("Ground-truth MAE, regular DGPs") < table.find("R-Loss, regular DGPs"));
    CHECK(table.find("1.000") != std::string::npos);
    CHECK(median_metric(rows, "step", Variant::regular, Model::teacher, true) == 1.0);
    CHECK_FALSE(median_metric(rows, "step", Variant::noisy, Model::teacher, true));
  }

  TEST_CASE("CSV sources report MAE only when truth is mapped") {
    const auto dir = temp_dir("dct_eval_source");
    DgpSpec spec;
    spec.n = 600;
    spec.p = 3;
    spec.seed = 11;
    write_csv(generate(spec), dir / "d.csv");
    BenchmarkConfig c = small_config();
    c.models = {Model::teacher, Model::greedy_dct};
    ColumnMapping with_tau;
    with_tau.tau = "tau_true";
    ColumnMapping without_tau;
    without_tau.drop = {"tau_true"};
    c.sources = {{"truth", std::nullopt, dir / "d.csv", with_tau}, {"blind", std::nullopt, dir / "d.csv", without_tau}};
    const BenchmarkReport report = run_benchmark(c);
    REQUIRE(report.rows.size() == 4);
    CHECK(report.rows[0].mae_truth);
    CHECK_FALSE(report.rows[2].mae_truth);
    CHECK(report.rows[2].ok());
    CHECK(report.rows[0].r_loss == report.rows[2].r_loss);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("zero-effect DGP keeps every model's MAE small") {
    // Benchmark defaults at n = 2000, five seeds.
    BenchmarkConfig c;
    DgpSpec spec;
    spec.name = "zero";
    spec.tau_fn = "zero";
    spec.n = 2000;
    c.sources = {{"zero", spec, {}, {}}};
    c.seeds = {0, 1, 2, 3, 4};
    c.timing = false;
    const BenchmarkReport report = run_benchmark(c);
    REQUIRE(report.rows.size() == 35);
    for (const auto& r : report.rows) {
      REQUIRE_MESSAGE(r.ok(), r.error);
      CHECK_MESSAGE(*r.mae_truth <= 0.3, std::string(key_name(r.model)), " seed ", r.seed);
    }
  }

  TEST_CASE("invalid configurations are rejected") {
    BenchmarkConfig c = small_config();
    c.seeds.clear();
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = small_config();
    c.sources.push_back(c.sources[0]);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = small_config();
    c.max_depth = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK_THROWS_AS(parse_model("forest"), std::invalid_argument);
    CHECK(parse_model("wager_best_tree") == Model::wager_best_tree);
    CHECK(parse_variant("noisy") == Variant::noisy);
  }
}

TEST_SUITE("distill") {
  Dataset distill_data(std::uint64_t seed) {
    DgpSpec spec;
    spec.tau_fn = "step";
    spec.n = 400;
    spec.p = 3;
    spec.seed = seed;
    return generate(spec);
  }

  CausalForestParams small_teacher() {
    CausalForestParams p;
    p.num_trees = 30;
    p.nuisance_trees = 20;
    p.seed = 5;
    return p;
  }

  DistillParams greedy_params() {
    DistillParams p;
    p.mode = DistillMode::greedy;
    p.max_depth = 3;
    p.min_leaf = 20;
    p.bootstrap_replicates = 50;
    p.split_seed = 9;
    p.seed = 2;
    return p;
  }

  bool same_splits(const RegressionTree& a, const RegressionTree& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const TreeNode& x = a.nodes()[i];
      const TreeNode& y = b.nodes()[i];
      if (x.feature != y.feature || x.threshold != y.threshold || x.left != y.left || x.right != y.right) return false;
    }
    return true;
  }

  TEST_CASE("the distillation split partitions the rows into halves") {
    const SampleSplit s = distillation_split(101, 3);
    CHECK(s.fit_indices.size() + s.est_indices.size() == 101);
    CHECK(s.fit_indices.size() >= 50);
    CHECK(s.est_indices.size() >= 50);
    std::vector<std::size_t> all = s.fit_indices;
    all.insert(all.end(), s.est_indices.begin(), s.est_indices.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
    CHECK(distillation_split(101, 3).est_indices == s.est_indices);
    CHECK_THROWS_AS(distillation_split(1, 0), DataError);
  }

  TEST_CASE("held-out outcomes move node estimates but never the teacher or the tree") {
    const Dataset d = distill_data(1);
    Dataset shifted = d;
    for (std::size_t r : distillation_split(d.rows(), 9).est_indices) shifted.y[r] += shifted.w[r] ? 5.0 : -3.0;

    const CausalForest a = fit_teacher(d, small_teacher(), 9);
    const CausalForest b = fit_teacher(shifted, small_teacher(), 9);
    CHECK(to_json(CausalForestDocument{a, d.feature_names, {}}) ==
          to_json(CausalForestDocument{b, d.feature_names, {}}));

    const DistillResult ra = distill_tree(a, d, greedy_params());
    const DistillResult rb = distill_tree(b, shifted, greedy_params());
    CHECK(same_splits(ra.tree.structure, rb.tree.structure));
    CHECK(ra.evaluation == rb.evaluation);
    CHECK(ra.n_fit + ra.n_est == d.rows());
    REQUIRE(ra.tree.estimates[0].available);
    CHECK(rb.tree.estimates[0].tau_hat > ra.tree.estimates[0].tau_hat + 1.0);
  }

  TEST_CASE("a teacher that saw the held-out half is rejected") {
    const Dataset d = distill_data(2);
    const CausalForest everywhere = fit_causal_forest(d, small_teacher());
    CHECK_THROWS_AS(distill_tree(everywhere, d, greedy_params()), DataError);
    const CausalForest other_split = fit_teacher(d, small_teacher(), 10);
    CHECK_THROWS_AS(distill_tree(other_split, d, greedy_params()), DataError);
    const CausalForest good = fit_teacher(d, small_teacher(), 9);
    CHECK_NOTHROW(distill_tree(good, d, greedy_params()));
    CHECK_THROWS_AS(distill_tree(good, distill_data(3), greedy_params()), DataError);
  }
}

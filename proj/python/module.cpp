#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dct/causal_forest.hpp"
#include "dct/evaluation.hpp"
#include "dct/leaf_estimation.hpp"
#include "dct/serialization.hpp"
#include "dct/synth.hpp"

namespace py = pybind11;
using namespace dct;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
  py::array_t<T> out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Dataset make_dataset(const Array& x, const std::vector<double>& y, const std::vector<int>& w,
                     std::optional<std::vector<double>> tau, std::optional<std::vector<std::string>> names) {
  Dataset d;
  d.x = to_matrix(x);
  d.y = y;
  d.w = w;
  d.tau_true = std::move(tau);
  if (names) {
    d.feature_names = *names;
  } else {
    for (std::size_t j = 0; j < d.cols(); ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  }
  d.validate();
  return d;
}

py::dict nuisance_dict(const NuisanceValues& nu) {
  py::dict out;
  out["m"] = to_array(nu.m);
  out["e"] = to_array(nu.e);
  out["mu0"] = to_array(nu.mu0);
  out["mu1"] = to_array(nu.mu1);
  return out;
}

struct PyForest {
  CausalForest forest;
  std::vector<std::string> feature_names;
  std::optional<SplitRecord> split;
};

CausalForestParams forest_params(std::size_t num_trees, std::size_t nuisance_trees, double subsample_fraction,
                                 double honest_fraction, std::size_t mtry, std::size_t min_leaf_treated,
                                 std::size_t min_leaf_control, int max_depth, std::uint64_t seed) {
  CausalForestParams p;
  p.num_trees = num_trees;
  p.nuisance_trees = nuisance_trees;
  p.subsample_fraction = subsample_fraction;
  p.honest_fraction = honest_fraction;
  p.mtry = mtry;
  p.min_leaf_treated = min_leaf_treated;
  p.min_leaf_control = min_leaf_control;
  p.max_depth = max_depth;
  p.seed = seed;
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_dctree, m) {
  m.doc() = "Distilled causal trees: causal forest teachers and single-tree students.";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);

  m.def("set_num_threads", &set_num_threads, py::arg("n"), "Cap worker threads (0: all cores).");

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("x"), py::arg("y"), py::arg("w"), py::arg("tau_true") = py::none(),
           py::arg("feature_names") = py::none())
      .def_property_readonly("x", [](const Dataset& d) { return to_array(d.x); })
      .def_property_readonly("y", [](const Dataset& d) { return to_array(d.y); })
      .def_property_readonly("w", [](const Dataset& d) { return to_array(d.w); })
      .def_property_readonly("tau_true",
                             [](const Dataset& d) -> py::object {
                               if (!d.tau_true) return py::none();
                               return to_array(*d.tau_true);
                             })
      .def_readonly("feature_names", &Dataset::feature_names)
      .def_property_readonly("n", &Dataset::rows)
      .def_property_readonly("p", &Dataset::cols)
      .def("__len__", &Dataset::rows);

  m.def(
      "generate",
      [](const std::string& tau_fn, std::size_t n, std::size_t p, double noise_sd, std::variant<double, std::string> propensity,
         std::uint64_t seed) {
        DgpSpec spec;
        spec.name = tau_fn;
        spec.tau_fn = tau_fn;
        spec.n = n;
        spec.p = p;
        spec.noise_sd = noise_sd;
        spec.propensity = propensity;
        spec.seed = seed;
        spec.validate();
        return generate(spec);
      },
      py::arg("tau_fn") = "step", py::arg("n") = 2000, py::arg("p") = 10, py::arg("noise_sd") = 1.0,
      py::arg("propensity") = 0.5, py::arg("seed") = 0, "Synthetic dataset with known effects.");

  m.def(
      "inject_noise",
      [](const Dataset& d, std::size_t n_noise, std::size_t n_corr, double rho, std::uint64_t seed) {
        NoiseSpec ns;
        ns.n_noise = n_noise;
        ns.n_corr = n_corr;
        ns.rho = rho;
        ns.seed = seed;
        return inject_noise(d, ns);
      },
      py::arg("dataset"), py::arg("n_noise") = 20, py::arg("n_corr") = 10, py::arg("rho") = 0.9, py::arg("seed") = 0);

  m.def(
      "load_csv",
      [](const std::filesystem::path& path, const std::string& outcome, const std::string& treatment,
         std::optional<std::string> tau, std::vector<std::string> covariates, std::vector<std::string> drop) {
        ColumnMapping mapping;
        mapping.outcome = outcome;
        mapping.treatment = treatment;
        mapping.tau = std::move(tau);
        mapping.covariates = std::move(covariates);
        mapping.drop = std::move(drop);
        return load_csv(path, mapping);
      },
      py::arg("path"), py::arg("outcome") = "y", py::arg("treatment") = "w", py::arg("tau") = py::none(),
      py::arg("covariates") = std::vector<std::string>{}, py::arg("drop") = std::vector<std::string>{});

  m.def("write_csv", &write_csv, py::arg("dataset"), py::arg("path"));

  py::class_<PyForest>(m, "CausalForest")
      .def_property_readonly("num_trees", [](const PyForest& f) { return f.forest.trees.size(); })
      .def_property_readonly("degenerate_trees", [](const PyForest& f) { return f.forest.degenerate_trees; })
      .def_readonly("feature_names", &PyForest::feature_names)
      .def(
          "predict", [](const PyForest& f, const Array& x) { return to_array(predict_cate(f.forest, to_matrix(x))); },
          py::arg("x"), "CATE predictions for new rows.")
      .def(
          "predict_oob",
          [](const PyForest& f, const Dataset& d) {
            const OobPrediction oob = predict_oob_cate(f.forest, d);
            return py::make_tuple(to_array(oob.values), to_array(oob.flagged));
          },
          py::arg("dataset"), "Out-of-bag CATEs on the training data and the rows with no out-of-bag tree.")
      .def(
          "nuisances_oob", [](const PyForest& f, const Dataset& d) { return nuisance_oob(*f.forest.nuisances, d.x); },
          py::arg("dataset"))
      .def_property_readonly("split_seed",
                             [](const PyForest& f) -> py::object {
                               if (!f.split) return py::none();
                               return py::int_(f.split->seed);
                             })
      .def("to_json",
           [](const PyForest& f) { return to_json(CausalForestDocument{f.forest, f.feature_names, f.split}); })
      .def_static("from_json", [](const std::string& text) {
        CausalForestDocument doc = causal_forest_from_json(text);
        return PyForest{std::move(doc.forest), std::move(doc.feature_names), doc.split};
      });

  py::class_<NuisanceValues>(m, "NuisanceValues")
      .def("as_dict", &nuisance_dict);

  m.def(
      "fit_causal_forest",
      [](const Dataset& d, std::size_t num_trees, std::size_t nuisance_trees, double subsample_fraction,
         double honest_fraction, std::size_t mtry, std::size_t min_leaf_treated, std::size_t min_leaf_control,
         int max_depth, std::uint64_t seed) {
        const CausalForestParams p = forest_params(num_trees, nuisance_trees, subsample_fraction, honest_fraction,
                                                   mtry, min_leaf_treated, min_leaf_control, max_depth, seed);
        py::gil_scoped_release release;
        return PyForest{fit_causal_forest(d, p), d.feature_names, std::nullopt};
      },
      py::arg("dataset"), py::arg("num_trees") = 2000, py::arg("nuisance_trees") = 500,
      py::arg("subsample_fraction") = 0.5, py::arg("honest_fraction") = 0.5, py::arg("mtry") = 0,
      py::arg("min_leaf_treated") = 5, py::arg("min_leaf_control") = 5, py::arg("max_depth") = -1,
      py::arg("seed") = 0, "Honest causal forest with out-of-bag nuisance forests, fit on every row.");

  m.def(
      "distillation_split",
      [](std::size_t n, std::uint64_t seed) {
        const SampleSplit s = distillation_split(n, seed);
        return py::make_tuple(to_array(s.fit_indices), to_array(s.est_indices));
      },
      py::arg("n"), py::arg("seed"), "Row indices (fit, est) of the split used by fit_teacher and distill.");

  m.def(
      "fit_teacher",
      [](const Dataset& d, std::uint64_t split_seed, std::size_t num_trees, std::size_t nuisance_trees,
         double subsample_fraction, double honest_fraction, std::size_t mtry, std::size_t min_leaf_treated,
         std::size_t min_leaf_control, int max_depth, std::uint64_t seed) {
        const CausalForestParams p = forest_params(num_trees, nuisance_trees, subsample_fraction, honest_fraction,
                                                   mtry, min_leaf_treated, min_leaf_control, max_depth, seed);
        py::gil_scoped_release release;
        return PyForest{fit_teacher(d, p, split_seed), d.feature_names, SplitRecord{split_seed, d.rows()}};
      },
      py::arg("dataset"), py::arg("split_seed") = 0, py::arg("num_trees") = 2000, py::arg("nuisance_trees") = 500,
      py::arg("subsample_fraction") = 0.5, py::arg("honest_fraction") = 0.5, py::arg("mtry") = 0,
      py::arg("min_leaf_treated") = 5, py::arg("min_leaf_control") = 5, py::arg("max_depth") = -1,
      py::arg("seed") = 0,
      "Causal forest fit on the training half of distillation_split(n, split_seed); the other half is left for "
      "node estimates in distill.");

  py::class_<LeafEstimate>(m, "LeafEstimate")
      .def_readonly("tau_hat", &LeafEstimate::tau_hat)
      .def_readonly("se", &LeafEstimate::se)
      .def_readonly("n", &LeafEstimate::n_node)
      .def_readonly("n_treated", &LeafEstimate::n_treated)
      .def_readonly("n_control", &LeafEstimate::n_control)
      .def_readonly("significant_95", &LeafEstimate::significant_95)
      .def_readonly("available", &LeafEstimate::available)
      .def_readonly("se_available", &LeafEstimate::se_available);

  py::class_<DistillResult>(m, "DistilledTree")
      .def_readonly("evaluation", &DistillResult::evaluation)
      .def_readonly("n_fit", &DistillResult::n_fit)
      .def_readonly("n_est", &DistillResult::n_est)
      .def_property_readonly("estimates", [](const DistillResult& r) { return r.tree.estimates; })
      .def_property_readonly("depth", [](const DistillResult& r) { return r.tree.structure.depth(); })
      .def_property_readonly("num_nodes", [](const DistillResult& r) { return r.tree.structure.size(); })
      .def_property_readonly("num_leaves", [](const DistillResult& r) { return r.tree.structure.leaf_count(); })
      .def_property_readonly("best_trace",
                             [](const DistillResult& r) {
                               return r.search ? r.search->best_trace : std::vector<double>{};
                             })
      .def(
          "predict",
          [](const DistillResult& r, const Array& x) {
            const DctPrediction p = predict_dct(r.tree, to_matrix(x), UnavailablePolicy::nearest_ancestor);
            return py::make_tuple(to_array(p.tau_hat), to_array(p.se));
          },
          py::arg("x"), "Node estimates and standard errors for new rows.")
      .def(
          "to_json",
          [](const DistillResult& r, const std::vector<std::string>& feature_names) {
            return to_json(TreeDocument{r.tree, feature_names, {}});
          },
          py::arg("feature_names"));

  m.def(
      "distill",
      [](const PyForest& f, const Dataset& d, const std::string& mode, int max_depth, std::size_t min_leaf,
         std::size_t population, std::size_t max_iterations, std::size_t min_iterations, double alpha,
         std::size_t bootstrap, std::uint64_t seed) {
        if (mode != "greedy" && mode != "optimal") throw std::invalid_argument("mode must be 'greedy' or 'optimal'");
        if (!f.split) throw DataError("distill needs a teacher from fit_teacher");
        if (f.split->rows != d.rows()) throw DataError("the teacher was fit on a split of a different dataset");
        DistillParams p;
        p.split_seed = f.split->seed;
        p.mode = mode == "greedy" ? DistillMode::greedy : DistillMode::optimal;
        p.max_depth = max_depth;
        p.min_leaf = min_leaf;
        p.evo.population_size = population;
        p.evo.max_iterations = max_iterations;
        p.evo.min_iterations = min_iterations;
        p.evo.alpha = alpha;
        p.bootstrap_replicates = bootstrap;
        p.seed = seed;
        py::gil_scoped_release release;
        return distill_tree(f.forest, d, p);
      },
      py::arg("forest"), py::arg("dataset"), py::arg("mode") = "optimal", py::arg("max_depth") = 4,
      py::arg("min_leaf") = 25, py::arg("population") = 200, py::arg("max_iterations") = 10000,
      py::arg("min_iterations") = 1000, py::arg("alpha") = 1.0, py::arg("bootstrap") = 500, py::arg("seed") = 0,
      "Distill a single tree from a teacher made by fit_teacher and estimate every node on the held-out half.");

  m.def(
      "mae_truth", [](const std::vector<double>& pred, const std::vector<double>& truth) { return mae_truth(pred, truth); },
      py::arg("pred"), py::arg("tau_true"));
}

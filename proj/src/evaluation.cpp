#include "dct/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

#include "dct/leaf_estimation.hpp"

namespace dct {

namespace {

struct ModelInfo {
  Model model;
  const char* display;
  const char* key;
};

constexpr ModelInfo kModels[] = {
    {Model::teacher, "Teacher", "teacher"},
    {Model::optimal_dct, "Optimal DCT", "optimal_dct"},
    {Model::greedy_dct, "Greedy DCT", "greedy_dct"},
    {Model::wager_best_tree, "Wager best tree", "wager_best_tree"},
    {Model::ten_tree_forest, "10 tree forest", "ten_tree_forest"},
    {Model::mean_tree, "Mean tree", "mean_tree"},
    {Model::basic_causal_tree, "Basic causal tree", "basic_causal_tree"},
};

const ModelInfo& info(Model m) { return kModels[static_cast<int>(m)]; }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

const std::vector<Model>& all_models() {
  static const std::vector<Model> models = [] {
    std::vector<Model> v;
    for (const auto& m : kModels) v.push_back(m.model);
    return v;
  }();
  return models;
}

const char* display_name(Model m) { return info(m).display; }
const char* key_name(Model m) { return info(m).key; }

Model parse_model(const std::string& key) {
  for (const auto& m : kModels) {
    if (key == m.key) return m.model;
  }
  throw std::invalid_argument("unknown model '" + key + "'");
}

const char* key_name(Variant v) { return v == Variant::regular ? "regular" : "noisy"; }

Variant parse_variant(const std::string& key) {
  if (key == "regular") return Variant::regular;
  if (key == "noisy") return Variant::noisy;
  throw std::invalid_argument("unknown variant '" + key + "' (expected regular or noisy)");
}

SampleSplit distillation_split(std::size_t n, std::uint64_t seed) {
  try {
    return split_honest(n, {0.5, 0.5, 0.0}, derive_seed(seed, 1));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("distillation split: sample too small: ") + e.what());
  }
}

CausalForest fit_teacher(const Dataset& d, const CausalForestParams& params, std::uint64_t split_seed) {
  const SampleSplit split = distillation_split(d.rows(), split_seed);
  return fit_causal_forest(d.subset(split.fit_indices), params);
}

DistillResult distill_tree(const CausalForest& teacher, const Dataset& d, const DistillParams& params) {
  if (params.max_depth < 0) throw std::invalid_argument("distill: max_depth must be >= 0");
  if (!teacher.nuisances) throw DataError("distill: teacher has no nuisance forests");
  if (d.cols() != teacher.fingerprint.p) {
    throw DataError("distill: data has " + std::to_string(d.cols()) + " covariates, the teacher was trained on " +
                    std::to_string(teacher.fingerprint.p));
  }
  const SampleSplit split = distillation_split(d.rows(), params.split_seed);
  const Dataset fit = d.subset(split.fit_indices);
  const Dataset est = d.subset(split.est_indices);
  if (!(TrainingFingerprint::of(fit.x) == teacher.fingerprint)) {
    throw DataError("distill: the teacher was not fit on the fit half of this data (split seed " +
                    std::to_string(params.split_seed) + ")");
  }

  DistillationTarget target;
  target.x = fit.x;
  target.t = predict_oob_cate(teacher, fit).values;

  EvoParams evo = params.evo;
  evo.max_depth = params.max_depth;
  evo.min_leaf = params.min_leaf;
  evo.seed = derive_seed(params.seed, 2);

  DistillResult result;
  RegressionTree tree;
  if (params.mode == DistillMode::greedy) {
    tree = fit_cart(target, params.max_depth, params.min_leaf);
  } else {
    result.search = run_evtree(target, evo);
    tree = result.search->tree;
  }
  result.evaluation = evaluate_tree(tree, target, evo.alpha);
  const NuisanceValues nu = nuisance_predict(*teacher.nuisances, est.x);
  std::vector<std::size_t> rows(est.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  result.tree = estimate_with_se(tree, est, rows, nu, params.bootstrap_replicates, derive_seed(params.seed, 3));
  result.n_fit = fit.rows();
  result.n_est = est.rows();
  return result;
}

BenchmarkConfig::BenchmarkConfig() {
  teacher.num_trees = 1000;
  evo.max_iterations = 5000;
}

void BenchmarkConfig::validate() const {
  if (sources.empty()) throw std::invalid_argument("benchmark: no data sources configured");
  if (variants.empty()) throw std::invalid_argument("benchmark: no variants configured");
  if (seeds.empty()) throw std::invalid_argument("benchmark: no seeds configured");
  if (models.empty()) throw std::invalid_argument("benchmark: no models configured");
  if (max_depth < 1) throw std::invalid_argument("benchmark: max_depth must be >= 1");
  if (nuisance_trees == 0 || small_forest_trees == 0) {
    throw std::invalid_argument("benchmark: forest sizes must be >= 1");
  }
  std::set<std::string> names;
  for (const auto& s : sources) {
    if (s.name.empty()) throw std::invalid_argument("benchmark: every source needs a name");
    if (!names.insert(s.name).second) throw std::invalid_argument("benchmark: duplicate source '" + s.name + "'");
    if (s.dgp) s.dgp->validate();
  }
  teacher.validate();
  EvoParams e = evo;
  e.max_depth = max_depth;
  e.validate();
}

CellResult run_cell(const BenchmarkConfig& config, const DataSource& source, Variant variant, std::uint64_t seed) {
  CellResult result;
  using Clock = std::chrono::steady_clock;

  Dataset data;
  if (source.dgp) {
    DgpSpec spec = *source.dgp;
    spec.seed = derive_seed(seed, 1);
    data = generate(spec);
  } else {
    data = load_csv(source.csv, source.mapping);
  }
  if (variant == Variant::noisy) {
    NoiseSpec ns = config.noise;
    ns.seed = derive_seed(seed, 2);
    data = inject_noise(data, ns);
  }

  const SampleSplit halves = split_honest(data, {0.5, 0.5, 0.0}, derive_seed(seed, 3));
  const Dataset train = data.subset(halves.fit_indices);
  const Dataset test = data.subset(halves.est_indices);
  // The training half is divided again: students are fit on one part and
  // every tree-shaped model is estimated on the other.
  const SampleSplit honest = split_honest(train, {0.5, 0.5, 0.0}, derive_seed(seed, 6));

  auto seconds_since = [&](Clock::time_point start) {
    return config.timing ? std::chrono::duration<double>(Clock::now() - start).count() : 0.0;
  };

  // Shared pieces, built lazily and attributed to the teacher's runtime.
  std::shared_ptr<const NuisanceModels> nuisances;
  NuisanceValues train_nu;
  NuisanceValues test_nu;
  std::optional<CausalForest> teacher;
  std::vector<double> teacher_oob;
  std::string shared_error;
  double shared_seconds = 0.0;
  {
    const auto start = Clock::now();
    try {
      ForestParams np;
      np.num_trees = config.nuisance_trees;
      np.seed = derive_seed(seed, 4);
      nuisances = std::make_shared<const NuisanceModels>(fit_nuisances(train, np));
      train_nu = nuisance_oob(*nuisances, train.x);
      test_nu = nuisance_predict(*nuisances, test.x);
      CausalForestParams tp = config.teacher;
      tp.seed = derive_seed(seed, 5);
      teacher = fit_causal_forest(train, tp, nuisances);
      teacher_oob = predict_oob_cate(*teacher, train).values;
    } catch (const std::exception& e) {
      shared_error = std::string("teacher: ") + e.what();
    }
    shared_seconds = seconds_since(start);
  }

  auto estimate_and_predict = [&](const RegressionTree& tree) {
    const EstimatedTree est = estimate_leaves(tree, train, honest.est_indices, train_nu);
    return predict_dct(est, test.x, UnavailablePolicy::nearest_ancestor).tau_hat;
  };

  auto student_target = [&] {
    DistillationTarget target;
    target.x = train.x.select_rows(honest.fit_indices);
    for (std::size_t r : honest.fit_indices) target.t.push_back(teacher_oob[r]);
    return target;
  };

  for (Model model : config.models) {
    BenchmarkRow row;
    row.dgp = source.name;
    row.variant = variant;
    row.model = model;
    row.seed = seed;
    std::vector<double> pred;
    const auto start = Clock::now();
    try {
      if (!teacher) throw std::runtime_error(shared_error);
      switch (model) {
        case Model::teacher:
          pred = predict_cate(*teacher, test.x);
          break;
        case Model::optimal_dct: {
          EvoParams ep = config.evo;
          ep.max_depth = config.max_depth;
          ep.seed = derive_seed(seed, 7);
          pred = estimate_and_predict(run_evtree(student_target(), ep).tree);
          break;
        }
        case Model::greedy_dct:
          pred = estimate_and_predict(fit_cart(student_target(), config.max_depth, config.greedy_min_leaf));
          break;
        case Model::wager_best_tree: {
          const std::size_t best = best_tree_by_rloss(*teacher, train, train_nu.m, train_nu.e, config.max_depth, true);
          pred = estimate_and_predict(extract_pruned_tree(*teacher, best, config.max_depth).tree);
          break;
        }
        case Model::ten_tree_forest: {
          CausalForestParams sp = config.teacher;
          sp.num_trees = config.small_forest_trees;
          sp.seed = derive_seed(seed, 8);
          pred = predict_cate(fit_causal_forest(train, sp, nuisances), test.x);
          break;
        }
        case Model::mean_tree: {
          // Each pruned tree is used as a kernel for the doubly robust
          // estimate, like every other single-tree model.
          Matrix per_tree(test.rows(), teacher->trees.size());
          parallel_for(teacher->trees.size(), [&](std::size_t t) {
            const auto col = estimate_and_predict(extract_pruned_tree(*teacher, t, config.max_depth).tree);
            for (std::size_t i = 0; i < col.size(); ++i) per_tree(i, t) = col[i];
          });
          pred.assign(per_tree.rows(), 0.0);
          for (std::size_t i = 0; i < per_tree.rows(); ++i) pred[i] = mean(per_tree.row(i));
          if (config.keep_histograms) {
            result.histogram = TreeHistogram{{source.name, variant, seed}, std::move(per_tree),
                                             test.tau_true.value_or(std::vector<double>{})};
          }
          break;
        }
        case Model::basic_causal_tree: {
          CausalForestParams bp = config.teacher;
          bp.mtry = train.cols();
          Rng rng(derive_seed(seed, 9));
          const CenteredData centered = center(train, train_nu);
          CausalTree tree = fit_causal_tree(train, centered, honest.fit_indices, honest.est_indices, bp, rng);
          pred = estimate_and_predict(tree.tree.truncated(config.max_depth));
          break;
        }
      }
      if (test.tau_true) row.mae_truth = mae_truth(pred, *test.tau_true);
      const auto w = test.w_as_double();
      row.r_loss = r_loss(pred, test.y, w, test_nu.m, test_nu.e);
      if (!std::isfinite(row.r_loss) || (row.mae_truth && !std::isfinite(*row.mae_truth))) {
        throw std::runtime_error("non-finite metric");
      }
    } catch (const std::exception& e) {
      row.error = e.what();
      row.mae_truth.reset();
      row.r_loss = 0.0;
      pred.clear();
    }
    row.runtime_seconds = seconds_since(start) + (model == Model::teacher ? shared_seconds : 0.0);
    result.rows.push_back(std::move(row));
    result.predictions.push_back(std::move(pred));
  }
  return result;
}

BenchmarkReport run_benchmark(const BenchmarkConfig& config, const CellCallback& on_cell) {
  config.validate();
  BenchmarkReport report;
  for (const auto& source : config.sources) {
    for (Variant variant : config.variants) {
      for (std::uint64_t seed : config.seeds) {
        const CellKey key{source.name, variant, seed};
        if (config.skip.contains(key)) continue;
        CellResult cell = run_cell(config, source, variant, seed);
        if (on_cell) on_cell(key, cell.rows, cell.histogram ? &*cell.histogram : nullptr);
        report.rows.insert(report.rows.end(), cell.rows.begin(), cell.rows.end());
        if (cell.histogram) report.histograms.push_back(std::move(*cell.histogram));
      }
    }
  }
  return report;
}

std::string report_csv_row(const BenchmarkRow& row) {
  std::string out = row.dgp + "," + key_name(row.variant) + "," + key_name(row.model) + "," + std::to_string(row.seed) + ",";
  if (!row.ok()) return out + "error,error," + format_double(row.runtime_seconds);
  out += row.mae_truth ? format_double(*row.mae_truth) : "NA";
  return out + "," + format_double(row.r_loss) + "," + format_double(row.runtime_seconds);
}

void write_report_csv(const BenchmarkReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << kReportHeader << "\n";
  for (const auto& row : report.rows) out << report_csv_row(row) << "\n";
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::vector<BenchmarkRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw DataError("'" + path.string() + "' is not a benchmark report");
  }
  std::vector<BenchmarkRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 7) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 7 fields");
    }
    try {
      BenchmarkRow row;
      row.dgp = cells[0];
      row.variant = parse_variant(cells[1]);
      row.model = parse_model(cells[2]);
      row.seed = std::stoull(cells[3]);
      if (cells[4] == "error") {
        row.error = "error";
      } else {
        if (cells[4] != "NA") row.mae_truth = std::stod(cells[4]);
        row.r_loss = std::stod(cells[5]);
      }
      row.runtime_seconds = std::stod(cells[6]);
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

std::string format_report_table(const std::vector<BenchmarkRow>& rows) {
  std::vector<std::string> dgps;
  std::vector<Model> models;
  std::map<std::tuple<std::string, Variant, Model>, std::pair<std::vector<double>, std::vector<double>>> cells;
  std::map<std::tuple<std::string, Variant, Model>, std::size_t> failures;
  for (const auto& r : rows) {
    if (std::find(dgps.begin(), dgps.end(), r.dgp) == dgps.end()) dgps.push_back(r.dgp);
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    const auto key = std::make_tuple(r.dgp, r.variant, r.model);
    if (!r.ok()) {
      ++failures[key];
      continue;
    }
    auto& c = cells[key];
    if (r.mae_truth) c.first.push_back(*r.mae_truth);
    c.second.push_back(r.r_loss);
  }
  std::sort(models.begin(), models.end());

  std::ostringstream out;
  for (bool use_mae : {true, false}) {
    for (Variant variant : {Variant::regular, Variant::noisy}) {
      const bool present = std::any_of(rows.begin(), rows.end(), [&](const BenchmarkRow& r) { return r.variant == variant; });
      if (!present) continue;
      std::vector<std::vector<std::string>> grid;
      std::vector<std::string> header{""};
      for (Model m : models) header.emplace_back(display_name(m));
      grid.push_back(header);
      for (const auto& dgp : dgps) {
        std::vector<std::string> line{dgp};
        for (Model m : models) {
          const auto key = std::make_tuple(dgp, variant, m);
          const auto it = cells.find(key);
          const std::vector<double>* values = nullptr;
          if (it != cells.end()) values = use_mae ? &it->second.first : &it->second.second;
          std::string text = "-";
          if (values && !values->empty()) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", mean(*values));
            text = buf;
          }
          if (failures.contains(key)) text += "!";
          line.push_back(text);
        }
        grid.push_back(line);
      }
      std::vector<std::size_t> width(header.size(), 0);
      for (const auto& line : grid) {
        for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
      }
      out << (use_mae ? "Ground-truth MAE" : "R-Loss") << ", " << key_name(variant) << " DGPs (mean over seeds)\n";
      for (std::size_t l = 0; l < grid.size(); ++l) {
        for (std::size_t c = 0; c < grid[l].size(); ++c) {
          const std::string& s = grid[l][c];
          if (c == 0) {
            out << s << std::string(width[c] - s.size(), ' ');
          } else {
            out << "  " << std::string(width[c] - s.size(), ' ') << s;
          }
        }
        out << "\n";
        if (l == 0) {
          std::size_t total = 0;
          for (std::size_t w : width) total += w + 2;
          out << std::string(total - 2, '-') << "\n";
        }
      }
      out << "\n";
    }
  }
  if (!failures.empty()) out << "! some runs of this model failed and are excluded\n";
  return out.str();
}

void write_histogram_csv(const TreeHistogram& histogram, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  const Matrix& m = histogram.predictions;
  const bool truth = histogram.tau_true.size() == m.rows();
  out << "row";
  if (truth) out << ",tau_true";
  for (std::size_t t = 0; t < m.cols(); ++t) out << ",tree_" << t;
  out << "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << i;
    if (truth) out << "," << format_double(histogram.tau_true[i]);
    for (std::size_t t = 0; t < m.cols(); ++t) out << "," << format_double(m(i, t));
    out << "\n";
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::optional<double> median_metric(const std::vector<BenchmarkRow>& rows, const std::string& dgp, Variant variant,
                                    Model model, bool use_mae) {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.dgp != dgp || r.variant != variant || r.model != model || !r.ok()) continue;
    if (use_mae) {
      if (r.mae_truth) v.push_back(*r.mae_truth);
    } else {
      v.push_back(r.r_loss);
    }
  }
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace dct

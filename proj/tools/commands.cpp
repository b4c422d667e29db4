#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "dct/causal_forest.hpp"
#include "dct/evaluation.hpp"
#include "dct/evo_tree.hpp"
#include "dct/leaf_estimation.hpp"
#include "dct/serialization.hpp"
#include "dct/synth.hpp"
#include "dot_export.hpp"

namespace dct::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split_list(s)) {
    try {
      const auto dash = part.find('-', 1);
      if (dash == std::string::npos) {
        seeds.push_back(std::stoull(part));
      } else {
        const auto a = std::stoull(part.substr(0, dash));
        const auto b = std::stoull(part.substr(dash + 1));
        if (b < a) throw std::invalid_argument("empty range");
        for (auto k = a; k <= b; ++k) seeds.push_back(k);
      }
    } catch (const std::exception&) {
      throw ConfigError("invalid seed list '" + s + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("seed list is empty");
  return seeds;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

// ---------------------------------------------------------------- data input

struct DataOptions {
  std::string csv;
  std::string outcome = "y";
  std::string treatment = "w";
  std::string tau;
  std::string potential_outcomes;
  std::string covariates;
  std::string drop;
  std::string tau_fn = "step";
  std::size_t n = 2000;
  std::size_t p = 10;
  double noise_sd = 1.0;
  std::string propensity = "0.5";
  std::uint64_t data_seed = 0;
  bool noisy = false;
  std::size_t n_noise = 20;
  std::size_t n_corr = 10;
  double rho = 0.9;
};

void add_mapping_options(CLI::App* sub, DataOptions& o) {
  sub->add_option("--outcome", o.outcome, "CSV column holding the outcome");
  sub->add_option("--treatment", o.treatment, "CSV column holding the 0/1 treatment");
  sub->add_option("--tau", o.tau, "CSV column holding the true effect, if known");
  sub->add_option("--potential-outcomes", o.potential_outcomes,
                  "CSV columns 'mu1,mu0' of potential-outcome means; the true effect is their difference");
  sub->add_option("--covariates", o.covariates, "Comma-separated covariate columns (default: all other columns)");
  sub->add_option("--drop", o.drop, "Comma-separated columns to ignore");
}

void add_dgp_shape_options(CLI::App* sub, DataOptions& o) {
  sub->add_option("--n", o.n, "Rows of synthetic data");
  sub->add_option("--p", o.p, "Covariates of synthetic data");
  sub->add_option("--noise-sd", o.noise_sd, "Outcome noise standard deviation of synthetic data");
  sub->add_option("--propensity", o.propensity,
                  "Treatment probability of synthetic data: a number in (0,1), 'constant' or 'confounded'");
}

void add_noise_options(CLI::App* sub, DataOptions& o) {
  sub->add_option("--n-noise", o.n_noise, "Pure noise columns added by noise injection");
  sub->add_option("--n-corr", o.n_corr, "Correlated columns added by noise injection");
  sub->add_option("--rho", o.rho, "Correlation of injected columns with their source");
}

void add_data_options(CLI::App* sub, DataOptions& o) {
  sub->add_option("--data", o.csv, "Input CSV; when absent a synthetic dataset is generated");
  add_mapping_options(sub, o);
  sub->add_option("--tau-fn", o.tau_fn, "Effect function of synthetic data: zero, step, linear, interaction");
  add_dgp_shape_options(sub, o);
  sub->add_option("--data-seed", o.data_seed, "Seed of synthetic data and of noise injection");
  sub->add_flag("--inject-noise", o.noisy, "Append noise and correlated columns to the data");
  add_noise_options(sub, o);
}

ColumnMapping mapping_of(const DataOptions& o) {
  ColumnMapping m;
  m.outcome = o.outcome;
  m.treatment = o.treatment;
  if (!o.tau.empty()) m.tau = o.tau;
  if (!o.potential_outcomes.empty()) {
    const auto cols = split_list(o.potential_outcomes);
    if (cols.size() != 2) throw ConfigError("--potential-outcomes expects 'mu1,mu0'");
    m.potential_outcomes = std::make_pair(cols[0], cols[1]);
  }
  m.covariates = split_list(o.covariates);
  m.drop = split_list(o.drop);
  return m;
}

DgpSpec dgp_of(const DataOptions& o, const std::string& tau_fn) {
  DgpSpec spec;
  spec.name = tau_fn;
  spec.tau_fn = tau_fn;
  spec.n = o.n;
  spec.p = o.p;
  spec.noise_sd = o.noise_sd;
  try {
    std::size_t used = 0;
    const double v = std::stod(o.propensity, &used);
    if (used != o.propensity.size()) throw std::invalid_argument("trailing characters");
    spec.propensity = v;
  } catch (const std::exception&) {
    spec.propensity = o.propensity;
  }
  spec.seed = o.data_seed;
  spec.validate();
  return spec;
}

NoiseSpec noise_of(const DataOptions& o, std::uint64_t seed) {
  NoiseSpec ns;
  ns.n_noise = o.n_noise;
  ns.n_corr = o.n_corr;
  ns.rho = o.rho;
  ns.seed = seed;
  return ns;
}

Dataset load_data(const DataOptions& o) {
  Dataset d = o.csv.empty() ? generate(dgp_of(o, o.tau_fn)) : load_csv(o.csv, mapping_of(o));
  if (o.noisy) d = inject_noise(d, noise_of(o, derive_seed(o.data_seed, 2)));
  return d;
}

// ------------------------------------------------------------ model options

void add_teacher_options(CLI::App* sub, CausalForestParams& p, const std::string& depth_flag) {
  sub->add_option("--num-trees", p.num_trees, "Trees in the causal forest teacher");
  sub->add_option("--nuisance-trees", p.nuisance_trees, "Trees in each nuisance regression forest");
  sub->add_option("--subsample-fraction", p.subsample_fraction, "Share of rows drawn (without replacement) per tree");
  sub->add_option("--honest-fraction", p.honest_fraction, "Share of each subsample used to choose splits");
  sub->add_option("--mtry", p.mtry, "Candidate features per split (0: min(ceil(sqrt(p)) + 20, p))");
  sub->add_option("--min-leaf-treated", p.min_leaf_treated, "Minimum treated rows per leaf in each half");
  sub->add_option("--min-leaf-control", p.min_leaf_control, "Minimum control rows per leaf in each half");
  if (!depth_flag.empty()) sub->add_option(depth_flag, p.max_depth, "Depth limit of teacher trees (-1: none)");
}

struct EvoOptions {
  EvoParams params;
  std::string operator_probs = "0.2,0.2,0.2,0.2,0.2";

  EvoParams resolve() const {
    EvoParams p = params;
    const auto parts = split_list(operator_probs);
    if (parts.size() != 5) throw ConfigError("--operator-probs expects 5 comma-separated probabilities");
    for (std::size_t k = 0; k < 5; ++k) {
      try {
        p.operator_probs[k] = std::stod(parts[k]);
      } catch (const std::exception&) {
        throw ConfigError("--operator-probs: '" + parts[k] + "' is not a number");
      }
    }
    return p;
  }
};

void add_evo_options(CLI::App* sub, EvoOptions& o) {
  sub->add_option("--population", o.params.population_size, "Trees in the evolutionary population");
  sub->add_option("--max-iterations", o.params.max_iterations, "Iteration cap of the evolutionary search");
  sub->add_option("--min-iterations", o.params.min_iterations, "Iterations before convergence may be declared");
  sub->add_option("--convergence-window", o.params.convergence_window,
                  "Iterations the elite must stay unchanged to converge");
  sub->add_option("--elite-fraction", o.params.elite_fraction, "Share of the population forming the elite");
  sub->add_option("--alpha", o.params.alpha, "Complexity weight of the evaluation function");
  sub->add_option("--greedy-seed-fraction", o.params.greedy_seed_fraction,
                  "Share of the initial population seeded from the greedy tree");
  sub->add_option("--operator-probs", o.operator_probs,
                  "Probabilities of split, prune, major mutation, minor mutation, crossover");
}

// ---------------------------------------------------------------- commands

struct GenerateCmd {
  DataOptions data;
  std::string out;
};

int cmd_generate(const GenerateCmd& c, std::ostream& out) {
  const Dataset d = load_data(c.data);
  write_csv(d, c.out);
  out << "wrote " << d.rows() << " rows x " << d.cols() << " covariates to " << c.out << "\n";
  return kExitOk;
}

struct FitTeacherCmd {
  DataOptions data;
  CausalForestParams params;
  std::uint64_t split_seed = 0;
  std::string out;
  std::string oob;
};

int cmd_fit_teacher(FitTeacherCmd c, std::ostream& out) {
  const Dataset d = load_data(c.data);
  const SampleSplit split = distillation_split(d.rows(), c.split_seed);
  const Dataset fit = d.subset(split.fit_indices);
  const CausalForest forest = fit_causal_forest(fit, c.params);
  write_text_file(c.out, to_json(CausalForestDocument{forest, d.feature_names, SplitRecord{c.split_seed, d.rows()}}));
  const OobPrediction oob = predict_oob_cate(forest, fit);
  const fs::path oob_path = c.oob.empty() ? with_suffix(c.out, ".oob.csv") : fs::path(c.oob);
  std::ostringstream csv;
  csv << "row,tau_hat,flagged\n";
  for (std::size_t i = 0; i < oob.values.size(); ++i) {
    csv << split.fit_indices[i] << "," << format_double(oob.values[i]) << "," << static_cast<int>(oob.flagged[i])
        << "\n";
  }
  write_text_file(oob_path, csv.str());
  const double covered =
      100.0 * static_cast<double>(fit.rows() - oob.flagged_count()) / static_cast<double>(fit.rows());
  char pct[32];
  std::snprintf(pct, sizeof pct, "%.1f", covered);
  out << "training rows: " << fit.rows() << " of " << d.rows() << " (the rest is held out for node estimates)\n";
  out << "trees: " << forest.trees.size() << "\n";
  out << "OOB coverage: " << pct << "% (" << oob.flagged_count() << " rows without an out-of-bag tree)\n";
  out << "degenerate trees: " << forest.degenerate_trees << "\n";
  out << "model: " << c.out << "\noob predictions: " << oob_path.string() << "\n";
  return kExitOk;
}

struct DistillCmd {
  DataOptions data;
  std::string model;
  std::string mode = "optimal";
  int max_depth = 4;
  std::size_t min_leaf = 25;
  EvoOptions evo;
  std::size_t bootstrap = 500;
  std::uint64_t seed = 0;
  std::string out;
  std::string dot;
  std::string progress;
};

int cmd_distill(const DistillCmd& c, std::ostream& out) {
  const CausalForestDocument model = causal_forest_from_json(read_text_file(c.model));
  const Dataset d = load_data(c.data);
  if (!model.split) throw DataError("'" + c.model + "' records no distillation split; refit it with fit-teacher");
  if (model.split->rows != d.rows()) {
    throw DataError("the teacher was fit on a split of " + std::to_string(model.split->rows) + " rows, the data has " +
                    std::to_string(d.rows()));
  }
  DistillParams params;
  params.split_seed = model.split->seed;
  params.mode = c.mode == "greedy" ? DistillMode::greedy : DistillMode::optimal;
  params.max_depth = c.max_depth;
  params.min_leaf = c.min_leaf;
  params.evo = c.evo.resolve();
  params.bootstrap_replicates = c.bootstrap;
  params.seed = c.seed;
  const DistillResult r = distill_tree(model.forest, d, params);

  std::map<std::string, std::string> meta;
  meta["mode"] = c.mode;
  meta["max_depth"] = std::to_string(c.max_depth);
  meta["min_leaf"] = std::to_string(c.min_leaf);
  meta["seed"] = std::to_string(c.seed);
  meta["split_seed"] = std::to_string(params.split_seed);
  meta["bootstrap_replicates"] = std::to_string(c.bootstrap);
  meta["evaluation"] = format_double(r.evaluation);
  meta["alpha"] = format_double(params.evo.alpha);
  meta["n_fit"] = std::to_string(r.n_fit);
  meta["n_est"] = std::to_string(r.n_est);
  if (r.search) {
    meta["iterations"] = std::to_string(r.search->iterations);
    meta["converged"] = r.search->converged ? "true" : "false";
    if (r.search->greedy_evaluation) meta["greedy_evaluation"] = format_double(*r.search->greedy_evaluation);
    if (!c.progress.empty()) {
      std::ostringstream csv;
      csv << "iteration,best_evaluation,elite_mean\n";
      for (const auto& p : r.search->progress) {
        csv << p.iteration << "," << format_double(p.best_evaluation) << "," << format_double(p.elite_mean) << "\n";
      }
      write_text_file(c.progress, csv.str());
    }
  }

  const TreeDocument doc{r.tree, model.feature_names, meta};
  write_text_file(c.out, to_json(doc));
  const fs::path dot_path = c.dot.empty() ? with_suffix(c.out, ".dot") : fs::path(c.dot);
  write_text_file(dot_path, to_dot(doc));

  std::size_t significant = 0;
  for (const auto& e : r.tree.estimates) significant += e.significant_95 ? 1 : 0;
  const RegressionTree& tree = r.tree.structure;
  out << "mode: " << c.mode << "\nleaves: " << tree.leaf_count() << "\ndepth: " << tree.depth()
      << "\nevaluation: " << format_double(r.evaluation) << "\nsignificant nodes: " << significant << " of "
      << tree.size() << "\ntree: " << c.out << "\ndot: " << dot_path.string() << "\n";
  return kExitOk;
}

struct SimulateCmd {
  std::string dgps = "step,interaction";
  std::string csv;
  DataOptions data;
  std::string variants = "regular,noisy";
  std::string seeds = "0-9";
  std::string models = "all";
  CausalForestParams teacher;
  std::size_t small_forest_trees = 10;
  int max_depth = 4;
  std::size_t min_leaf = 25;
  EvoOptions evo;
  bool timing = true;
  bool histograms = false;
  bool resume = false;
  std::string out_dir;

  SimulateCmd() {
    const BenchmarkConfig defaults;
    teacher = defaults.teacher;
    teacher.nuisance_trees = defaults.nuisance_trees;
    small_forest_trees = defaults.small_forest_trees;
    max_depth = defaults.max_depth;
    min_leaf = defaults.greedy_min_leaf;
    evo.params = defaults.evo;
  }
};

int cmd_simulate(const SimulateCmd& c, std::ostream& out, std::ostream& err) {
  BenchmarkConfig config;
  for (const auto& name : split_list(c.dgps)) config.sources.push_back({name, dgp_of(c.data, name), {}, {}});
  for (const auto& path : split_list(c.csv)) {
    config.sources.push_back({fs::path(path).stem().string(), std::nullopt, path, mapping_of(c.data)});
  }
  config.variants.clear();
  for (const auto& v : split_list(c.variants)) config.variants.push_back(parse_variant(v));
  config.seeds = parse_seeds(c.seeds);
  if (c.models != "all") {
    config.models.clear();
    for (const auto& m : split_list(c.models)) config.models.push_back(parse_model(m));
  }
  config.noise = noise_of(c.data, 0);
  config.teacher = c.teacher;
  config.nuisance_trees = c.teacher.nuisance_trees;
  config.small_forest_trees = c.small_forest_trees;
  config.max_depth = c.max_depth;
  config.evo = c.evo.resolve();
  config.evo.min_leaf = c.min_leaf;
  config.greedy_min_leaf = c.min_leaf;
  config.timing = c.timing;
  config.keep_histograms = c.histograms;
  config.validate();

  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  const fs::path report_path = dir / "report.csv";

  // Resume: keep the rows of cells that already have every configured model.
  std::vector<BenchmarkRow> kept;
  if (c.resume && fs::exists(report_path)) {
    const auto previous = read_report_csv(report_path);
    std::map<CellKey, std::vector<BenchmarkRow>> by_cell;
    std::vector<CellKey> order;
    for (const auto& r : previous) {
      const CellKey key{r.dgp, r.variant, r.seed};
      if (!by_cell.contains(key)) order.push_back(key);
      by_cell[key].push_back(r);
    }
    for (const auto& key : order) {
      const auto& rows = by_cell[key];
      bool complete = rows.size() == config.models.size();
      for (std::size_t k = 0; complete && k < rows.size(); ++k) complete = rows[k].model == config.models[k];
      if (!complete) continue;
      config.skip.insert(key);
      kept.insert(kept.end(), rows.begin(), rows.end());
    }
  }
  {
    std::ofstream csv(report_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw DataError("cannot write '" + report_path.string() + "'");
    csv << kReportHeader << "\n";
    for (const auto& r : kept) csv << report_csv_row(r) << "\n";
  }
  if (!config.skip.empty()) out << "resuming: " << config.skip.size() << " completed cells skipped\n";

  std::vector<BenchmarkRow> all = kept;
  std::size_t failures = 0;
  const BenchmarkReport report =
      run_benchmark(config, [&](const CellKey& key, const std::vector<BenchmarkRow>& rows, const TreeHistogram* hist) {
        std::ofstream csv(report_path, std::ios::binary | std::ios::app);
        for (const auto& r : rows) {
          csv << report_csv_row(r) << "\n";
          if (!r.ok()) {
            ++failures;
            err << "warning: " << r.dgp << "/" << key_name(r.variant) << "/seed " << r.seed << "/"
                << key_name(r.model) << " failed: " << r.error << "\n";
          }
        }
        if (!csv) throw DataError("write failed for '" + report_path.string() + "'");
        if (hist) {
          fs::create_directories(dir / "histograms");
          write_histogram_csv(*hist, dir / "histograms" /
                                         (key.dgp + "_" + key_name(key.variant) + "_" + std::to_string(key.seed) + ".csv"));
        }
        out << "done: " << key.dgp << " " << key_name(key.variant) << " seed " << key.seed << "\n";
      });
  all.insert(all.end(), report.rows.begin(), report.rows.end());
  write_text_file(dir / "report.txt", format_report_table(all));
  out << format_report_table(all);
  out << "report: " << report_path.string() << "\n";
  if (failures > 0) out << failures << " model runs failed (marked 'error' in the report)\n";
  return kExitOk;
}

struct ExportCmd {
  std::string tree;
  std::string format = "dot";
  std::string out = "-";
};

int cmd_export(const ExportCmd& c, std::ostream& out) {
  const TreeDocument doc = tree_document_from_json(read_text_file(c.tree));
  const std::string text = c.format == "dot" ? to_dot(doc) : to_json(doc);
  if (c.out == "-") {
    out << text;
  } else {
    write_text_file(c.out, text);
  }
  return kExitOk;
}

// ------------------------------------------------------------ config files

std::vector<std::string> expand_config(std::vector<std::string> args, CLI::App& app) {
  // Locate the command name, skipping global options.
  std::size_t cmd = args.size();
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--threads") {
      ++i;
      continue;
    }
    if (!args[i].empty() && args[i][0] != '-') {
      cmd = i;
      break;
    }
  }
  if (cmd == args.size()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[cmd]);
  if (sub == nullptr) return args;

  std::string config_path;
  std::vector<std::string> rest;
  for (std::size_t i = cmd + 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file name");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return args;

  std::vector<std::string> injected;
  for (const auto& e : read_config(config_path)) {
    if (e.key == "config" || e.key == "help" || sub->get_option_no_throw("--" + e.key) == nullptr) {
      throw ConfigError(config_path + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "' for command '" +
                        sub->get_name() + "'");
    }
    injected.push_back("--" + e.key + "=" + e.value);
  }
  std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(cmd + 1));
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{
      "Distilled causal trees: fit a causal forest teacher, distill one interpretable tree from it, and benchmark "
      "single-tree extraction strategies.\nEvery command accepts --config FILE with one 'key = value' per line "
      "(keys are the long flag names); flags given on the command line override the file."};
  app.name("dct");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker thread cap for all parallel sections (0: all cores)")
      ->envname("DCT_THREADS");

  auto add_config_flag = [](CLI::App* sub) {
    sub->add_option("--config", "Flat key = value config file; command-line flags take precedence");
  };

  GenerateCmd gen;
  CLI::App* gen_app = app.add_subcommand("generate", "Write a synthetic dataset (optionally noise-injected) as CSV");
  add_data_options(gen_app, gen.data);
  gen_app->add_option("--out", gen.out, "Output CSV")->required();
  add_config_flag(gen_app);

  FitTeacherCmd fit;
  CLI::App* fit_app = app.add_subcommand("fit-teacher", "Fit the causal forest teacher and its nuisance forests");
  add_data_options(fit_app, fit.data);
  add_teacher_options(fit_app, fit.params, "--max-depth");
  fit_app->add_option("--seed", fit.params.seed, "Seed of the forest fit");
  fit_app->add_option("--split-seed", fit.split_seed,
                      "Seed of the split into the training half and the half held out for node estimates");
  fit_app->add_option("--out", fit.out, "Model JSON")->required();
  fit_app->add_option("--oob", fit.oob, "Out-of-bag CATE CSV (default: <out>.oob.csv)");
  add_config_flag(fit_app);

  DistillCmd dist;
  CLI::App* dist_app = app.add_subcommand("distill", "Distill one tree from a teacher and estimate its nodes (AIPW)");
  add_data_options(dist_app, dist.data);
  dist_app->add_option("--model", dist.model, "Teacher model JSON from fit-teacher")->required();
  dist_app->add_option("--mode", dist.mode, "Student fitter")->check(CLI::IsMember({"greedy", "optimal"}));
  dist_app->add_option("--max-depth", dist.max_depth, "Depth limit of the distilled tree");
  dist_app->add_option("--min-leaf", dist.min_leaf, "Minimum fit rows per leaf");
  add_evo_options(dist_app, dist.evo);
  dist_app->add_option("--bootstrap", dist.bootstrap, "Bootstrap replicates per node for standard errors");
  dist_app->add_option("--seed", dist.seed, "Seed of the search and bootstrap (the split is recorded in the model)");
  dist_app->add_option("--out", dist.out, "Tree JSON")->required();
  dist_app->add_option("--dot", dist.dot, "Graphviz output (default: <out>.dot)");
  dist_app->add_option("--progress", dist.progress, "Per-iteration progress CSV (optimal mode)");
  add_config_flag(dist_app);

  SimulateCmd sim;
  CLI::App* sim_app = app.add_subcommand("simulate", "Benchmark the seven tree strategies on synthetic or CSV data");
  sim_app->add_option("--dgps", sim.dgps, "Comma-separated effect functions, one synthetic DGP each");
  sim_app->add_option("--csv", sim.csv, "Comma-separated CSV inputs (need a --tau column for ground-truth MAE)");
  add_mapping_options(sim_app, sim.data);
  add_dgp_shape_options(sim_app, sim.data);
  add_noise_options(sim_app, sim.data);
  sim_app->add_option("--variants", sim.variants, "Comma-separated: regular, noisy");
  sim_app->add_option("--seeds", sim.seeds, "Seeds, e.g. '0-9' or '1,4,7'");
  sim_app->add_option("--models", sim.models, "'all' or comma-separated model keys");
  add_teacher_options(sim_app, sim.teacher, "");
  sim_app->add_option("--small-forest-trees", sim.small_forest_trees, "Trees in the small forest baseline");
  sim_app->add_option("--max-depth", sim.max_depth, "Depth limit of every single-tree model");
  sim_app->add_option("--min-leaf", sim.min_leaf, "Minimum fit rows per leaf of the distilled trees");
  add_evo_options(sim_app, sim.evo);
  sim_app->add_option("--timing", sim.timing, "Record runtimes (false writes 0 for reproducible reports)");
  sim_app->add_flag("--histograms", sim.histograms, "Write per-tree prediction matrices");
  sim_app->add_flag("--resume", sim.resume, "Skip cells already complete in <out-dir>/report.csv");
  sim_app->add_option("--out-dir", sim.out_dir, "Output directory")->required();
  add_config_flag(sim_app);

  ExportCmd exp;
  CLI::App* exp_app = app.add_subcommand("export", "Re-export a distilled tree as DOT or JSON");
  exp_app->add_option("--tree", exp.tree, "Tree JSON from distill")->required();
  exp_app->add_option("--format", exp.format, "Output format")->check(CLI::IsMember({"dot", "json"}));
  exp_app->add_option("--out", exp.out, "Output file ('-' for stdout)");
  add_config_flag(exp_app);

  try {
    std::vector<std::string> argv = expand_config(args, app);
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    set_num_threads(threads);
    if (gen_app->parsed()) return cmd_generate(gen, out);
    if (fit_app->parsed()) return cmd_fit_teacher(fit, out);
    if (dist_app->parsed()) return cmd_distill(dist, out);
    if (sim_app->parsed()) return cmd_simulate(sim, out, err);
    if (exp_app->parsed()) return cmd_export(exp, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: invalid parameter: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace dct::cli

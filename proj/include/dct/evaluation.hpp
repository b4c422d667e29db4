#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "dct/causal_forest.hpp"
#include "dct/dataset.hpp"
#include "dct/evo_tree.hpp"
#include "dct/leaf_estimation.hpp"
#include "dct/metrics.hpp"
#include "dct/synth.hpp"

namespace dct {

enum class DistillMode { greedy, optimal };

struct DistillParams {
  DistillMode mode = DistillMode::optimal;
  int max_depth = 4;
  /// Minimum fit-half rows per leaf.
  std::size_t min_leaf = 25;
  /// Search settings for optimal mode; depth, leaf size and seed are taken
  /// from this struct.
  EvoParams evo;
  std::size_t bootstrap_replicates = 500;
  /// Must equal the seed the teacher was fit with in fit_teacher.
  std::uint64_t split_seed = 0;
  /// The search uses derive_seed(seed, 2) and the bootstrap derive_seed(seed, 3).
  std::uint64_t seed = 0;
};

struct DistillResult {
  EstimatedTree tree;
  /// Penalized distillation loss of the student on the fit half.
  double evaluation = 0.0;
  std::size_t n_fit = 0;
  std::size_t n_est = 0;
  /// Present in optimal mode.
  std::optional<EvoResult> search;
};

/// Random halves of n rows drawn with derive_seed(seed, 1). The teacher,
/// its nuisance forests and the student only see fit_indices; node effects
/// are estimated from est_indices alone. Throws DataError when a half would
/// be empty.
SampleSplit distillation_split(std::size_t n, std::uint64_t seed);

/// Fits the teacher (with its own nuisance forests) on the fit half of
/// distillation_split(d.rows(), split_seed).
CausalForest fit_teacher(const Dataset& d, const CausalForestParams& params, std::uint64_t split_seed);

/// Distills one tree from a teacher made by fit_teacher on the same `d` and
/// split seed. The teacher's out-of-bag CATEs on the fit half are the
/// student's target. Node effects are AIPW estimates on the held-out half,
/// with nuisances predicted by the teacher's nuisance forests, which never
/// saw those rows. Throws DataError when the teacher does not match the fit
/// half of `d`.
DistillResult distill_tree(const CausalForest& teacher, const Dataset& d, const DistillParams& params);

/// The seven strategies, in report column order.
enum class Model {
  teacher,
  optimal_dct,
  greedy_dct,
  wager_best_tree,
  ten_tree_forest,
  mean_tree,
  basic_causal_tree,
};

const std::vector<Model>& all_models();
/// Column heading, e.g. "Optimal DCT".
const char* display_name(Model m);
/// Identifier used in CSV files and config, e.g. "optimal_dct".
const char* key_name(Model m);
Model parse_model(const std::string& key);

enum class Variant { regular, noisy };
const char* key_name(Variant v);
Variant parse_variant(const std::string& key);

/// A benchmark input: either a synthetic DGP (its seed is replaced per run)
/// or a CSV file.
struct DataSource {
  std::string name;
  std::optional<DgpSpec> dgp;
  std::filesystem::path csv;
  ColumnMapping mapping;
};

struct CellKey {
  std::string dgp;
  Variant variant = Variant::regular;
  std::uint64_t seed = 0;

  auto operator<=>(const CellKey&) const = default;
};

struct BenchmarkConfig {
  std::vector<DataSource> sources;
  std::vector<Variant> variants = {Variant::regular};
  std::vector<std::uint64_t> seeds = {0};
  std::vector<Model> models = all_models();

  /// Noise injection for the noisy variant; its seed is derived per run.
  NoiseSpec noise;
  /// 1000 trees by default.
  CausalForestParams teacher;
  /// Trees in each shared nuisance forest.
  std::size_t nuisance_trees = 500;
  std::size_t small_forest_trees = 10;
  /// Depth limit for every single-tree model.
  int max_depth = 4;
  /// Evolutionary search settings (5000 iterations by default); max_depth is
  /// overridden by the field above.
  EvoParams evo;
  /// Minimum leaf size of the greedy student.
  std::size_t greedy_min_leaf = 25;
  /// When false every runtime is reported as 0 so reports are reproducible byte for byte.
  bool timing = true;
  bool keep_histograms = false;
  /// Cells already completed (e.g. when resuming); they are not rerun.
  std::set<CellKey> skip;

  BenchmarkConfig();
  void validate() const;
};

struct BenchmarkRow {
  std::string dgp;
  Variant variant = Variant::regular;
  Model model = Model::teacher;
  std::uint64_t seed = 0;
  /// Absent when the data carries no true effects.
  std::optional<double> mae_truth;
  double r_loss = 0.0;
  double runtime_seconds = 0.0;
  /// Empty unless this model failed; metrics are then meaningless.
  std::string error;

  bool ok() const { return error.empty(); }
};

/// Test-set predictions of every pruned teacher tree (rows x trees).
struct TreeHistogram {
  CellKey cell;
  Matrix predictions;
  std::vector<double> tau_true;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::vector<TreeHistogram> histograms;
};

/// Called after every completed cell with that cell's rows (and histogram when
/// kept), in cell order.
using CellCallback = std::function<void(const CellKey&, const std::vector<BenchmarkRow>&, const TreeHistogram*)>;

/// Runs every (source, variant, seed) cell in order: split 50/50 into train and
/// test, fit shared nuisance forests and the teacher on train, build each
/// requested model, and score its test-set predictions. A failing model yields
/// a row with `error` set; the run continues.
BenchmarkReport run_benchmark(const BenchmarkConfig& config, const CellCallback& on_cell = {});

/// Everything one cell produces, exposed for diagnostics and tests.
struct CellResult {
  std::vector<BenchmarkRow> rows;
  /// Test-set predictions per row (empty for failed models).
  std::vector<std::vector<double>> predictions;
  std::optional<TreeHistogram> histogram;
};
CellResult run_cell(const BenchmarkConfig& config, const DataSource& source, Variant variant, std::uint64_t seed);

inline constexpr const char* kReportHeader = "dgp,variant,model,seed,mae_truth,r_loss,runtime_seconds";

std::string report_csv_row(const BenchmarkRow& row);
void write_report_csv(const BenchmarkReport& report, const std::filesystem::path& path);
/// Reads a report CSV (rows with an error marker are kept with `error` set).
std::vector<BenchmarkRow> read_report_csv(const std::filesystem::path& path);

/// Aligned text tables, one per (variant, metric), with one line per DGP and
/// the models as columns in report order. Cells are means over seeds of the
/// successful rows.
std::string format_report_table(const std::vector<BenchmarkRow>& rows);

void write_histogram_csv(const TreeHistogram& histogram, const std::filesystem::path& path);

std::optional<double> median_metric(const std::vector<BenchmarkRow>& rows, const std::string& dgp, Variant variant,
                                    Model model, bool use_mae);

}  // namespace dct

#pragma once

#include "ksbo/problems.hpp"
#include "ksbo/strategies.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ksbo {

enum class StrategyId { Sur, BaselineKs, BaselineCks, Random };

// Everything an experiment needs, loadable from a JSON config file.  Unknown
// keys are rejected so typos fail loudly instead of silently using defaults.
struct ExperimentConfig {
  std::string problem;  // problem id, e.g. "hartman6@1e5"
  StrategyId strategy = StrategyId::Sur;
  EquilibriumKind mode = EquilibriumKind::KS;
  int budget = 0;  // total evaluations including the initial design
  int n0 = 0;      // 0 -> 2 * input dimension
  int n_star = 250;
  int m_draws = 25;
  int n_aux = 10000;
  int n_mc = 1000;
  double beta = 1.96;
  std::int64_t n_large = 100000;
  std::optional<std::vector<double>> preferences;  // "inf" entries keep the nadir
  int repetitions = 1;
  std::uint64_t base_seed = 1;    // repetition r runs with base_seed + r
  std::uint64_t domain_seed = 7;  // finite-domain generation seed
  std::string reference;          // path to a reference file; empty = no gap columns
  KernelFamily kernel = KernelFamily::Matern52;
  TrendKind trend = TrendKind::Constant;
  std::string out_dir;  // resolved against $KSBO_OUT_ROOT when relative
  int threads = 1;      // worker threads across repetitions
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// One result row per evaluation.
struct RunRecord {
  int iter = 0;  // evaluation count after this observation
  Design x;
  Vector f;
  std::string phase;
  int est_index = -1;      // row of the mode-specific equilibrium estimate
  double min_ratio = 0.0;  // its maximized minimum ratio / rank
  double gap_ks = 0.0;     // only meaningful when the run had a reference
  double gap_cks = 0.0;
  double wall_ms = 0.0;
};

struct ResultTable {
  int dim = 0;
  int n_obj = 0;
  bool has_gaps = false;
  std::vector<RunRecord> rows;
};

struct ExperimentResult {
  std::filesystem::path out_dir;
  std::vector<std::filesystem::path> rep_files;
  std::filesystem::path summary_file;
  std::filesystem::path metadata_file;
};

// Runs all repetitions (seeds base_seed + r), writing rep_<r>.csv row by row,
// then summary.csv (per-iteration quantiles) and metadata.json (timestamps
// and the echoed config; kept separate so result files stay reproducible).
ExperimentResult run_experiment(const ExperimentConfig& config);

// Stable results schema: iter, x_1..x_d, f_1..f_p, phase, est_index,
// min_ratio[, gap_ks, gap_cks], wall_ms.
std::string results_header(int dim, int n_obj, bool with_gaps);
ResultTable read_result_file(const std::filesystem::path& path);

// Reference persistence: the file stores ids, seeds, hashes, and solutions;
// loading re-streams the domain to rebuild the rank table and verifies the
// domain hash.
void save_reference(const ReferenceSolution& reference, const std::filesystem::path& path);
ReferenceSolution load_reference(const std::filesystem::path& path);

enum class PlotKind { GapCurves, ParallelCoordinates, PairwiseProjections, CopulaProjections };

PlotKind parse_plot_kind(const std::string& name);

// Derives plot-ready tables from the rep_*.csv files in run_dir; writes
// <run_dir>/plots/<kind>.csv unless out overrides the destination.
std::filesystem::path emit_plot_data(const std::filesystem::path& run_dir, PlotKind kind,
                                     const std::filesystem::path& out = {});

// out_dir resolution: absolute paths pass through, relative paths land under
// $KSBO_OUT_ROOT (or the working directory when unset).
std::filesystem::path resolve_out_dir(const std::string& out_dir);

}  // namespace ksbo

#include "ksbo/experiment.hpp"
#include "ksbo/rng.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>

namespace {

std::string sanitize_id(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '-' || c == '.';
    if (!keep) c = '_';
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Many-objective Bayesian optimization toward Kalai-Smorodinsky equilibria"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed_override = 0;
  int reps_override = 0;
  std::string out_override;
  auto* run = app.add_subcommand("run", "Execute a JSON experiment config");
  run->add_option("config", config_path, "config file")->required();
  auto* run_seed = run->add_option("--seed", seed_override, "override base_seed");
  auto* run_reps = run->add_option("--reps", reps_override, "override repetitions");
  auto* run_out = run->add_option("--out", out_override, "override out_dir");

  std::string problem_id;
  std::uint64_t domain_seed = 7;
  std::uint64_t aux_seed = 0;
  std::string ref_out;
  auto* ref = app.add_subcommand("reference", "Compute exhaustive ground truth");
  ref->add_option("problem", problem_id, "finite-domain problem id, e.g. hartman6@1e5")
      ->required();
  ref->add_option("--seed", domain_seed, "domain generation seed");
  auto* ref_aux = ref->add_option("--aux-seed", aux_seed, "rank-sample seed (default: --seed)");
  ref->add_option("--out", ref_out, "output file (default under $KSBO_OUT_ROOT)");

  std::string run_dir;
  std::string kind_name;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "Derive plot-ready tables from a run directory");
  plot->add_option("dir", run_dir, "directory with rep_*.csv files")->required();
  plot->add_option("--kind", kind_name,
                   "gap_curves | parallel_coordinates | pairwise_projections | "
                   "copula_projections")
      ->required();
  plot->add_option("--out", plot_out, "override the output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      ksbo::ExperimentConfig config = ksbo::load_config(config_path);
      if (run_seed->count() > 0) config.base_seed = seed_override;
      if (run_reps->count() > 0) config.repetitions = reps_override;
      if (run_out->count() > 0) config.out_dir = out_override;
      const ksbo::ExperimentResult result = ksbo::run_experiment(config);
      std::cout << "wrote " << result.rep_files.size() << " repetition file(s) under "
                << result.out_dir.string() << "\n"
                << "summary:  " << result.summary_file.string() << "\n"
                << "metadata: " << result.metadata_file.string() << "\n";
    } else if (ref->parsed()) {
      const ksbo::Problem problem = ksbo::parse_problem_id(
          problem_id, domain_seed, ksbo::mix_seed(domain_seed, ksbo::seed_tag::kNoise));
      if (!problem.domain)
        throw ksbo::ConfigError("reference needs a finite-domain problem id (append @SIZE)");
      const std::uint64_t aux = ref_aux->count() > 0 ? aux_seed : domain_seed;
      const ksbo::ReferenceSolution solution = ksbo::compute_reference(problem, aux);
      std::filesystem::path dest;
      if (!ref_out.empty()) {
        dest = ref_out;
      } else {
        char tail[64];
        std::snprintf(tail, sizeof(tail), "_seed%llu.json",
                      static_cast<unsigned long long>(domain_seed));
        dest = ksbo::resolve_out_dir("") / ("ref_" + sanitize_id(problem_id) + tail);
      }
      ksbo::save_reference(solution, dest);
      std::cout << "reference: " << dest.string() << "\n"
                << "KS min ratio:  " << solution.ks.min_ratio << "\n"
                << "CKS min rank:  " << solution.cks.min_ratio << "\n";
    } else if (plot->parsed()) {
      const std::filesystem::path dest = ksbo::emit_plot_data(
          run_dir, ksbo::parse_plot_kind(kind_name),
          plot_out.empty() ? std::filesystem::path{} : std::filesystem::path(plot_out));
      std::cout << dest.string() << "\n";
    }
    return 0;
  } catch (const ksbo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

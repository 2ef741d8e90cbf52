#include "ksbo/experiment.hpp"

#include "ksbo/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

namespace ksbo {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- config parsing ------------------------------------------------------

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

std::int64_t as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t as_seed(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError("config key '" + key + "' must be a nonnegative integer");
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

StrategyId parse_strategy(const std::string& name) {
  if (name == "sur") return StrategyId::Sur;
  if (name == "baseline_ks") return StrategyId::BaselineKs;
  if (name == "baseline_cks") return StrategyId::BaselineCks;
  if (name == "random") return StrategyId::Random;
  throw ConfigError("unknown strategy '" + name + "'");
}

EquilibriumKind parse_mode(const std::string& name) {
  if (name == "KS") return EquilibriumKind::KS;
  if (name == "KSpref") return EquilibriumKind::KSpref;
  if (name == "CKS") return EquilibriumKind::CKS;
  throw ConfigError("unknown mode '" + name + "'");
}

KernelFamily parse_kernel(const std::string& name) {
  if (name == "matern52") return KernelFamily::Matern52;
  if (name == "gaussian") return KernelFamily::Gaussian;
  throw ConfigError("unknown kernel '" + name + "'");
}

TrendKind parse_trend(const std::string& name) {
  if (name == "constant") return TrendKind::Constant;
  if (name == "linear") return TrendKind::Linear;
  throw ConfigError("unknown trend '" + name + "'");
}

std::vector<double> parse_preferences(const json& v) {
  if (!v.is_array()) throw ConfigError("config key 'preferences' must be an array");
  std::vector<double> out;
  for (const auto& item : v) {
    if (item.is_number()) {
      out.push_back(item.get<double>());
    } else if (item.is_string() && item.get<std::string>() == "inf") {
      out.push_back(std::numeric_limits<double>::infinity());
    } else {
      throw ConfigError("preference entries must be numbers or \"inf\"");
    }
  }
  return out;
}

const char* strategy_name(StrategyId s) {
  switch (s) {
    case StrategyId::Sur: return "sur";
    case StrategyId::BaselineKs: return "baseline_ks";
    case StrategyId::BaselineCks: return "baseline_cks";
    case StrategyId::Random: return "random";
  }
  return "?";
}

const char* mode_name(EquilibriumKind m) {
  switch (m) {
    case EquilibriumKind::KS: return "KS";
    case EquilibriumKind::KSpref: return "KSpref";
    case EquilibriumKind::CKS: return "CKS";
  }
  return "?";
}

const char* kernel_name(KernelFamily k) {
  return k == KernelFamily::Matern52 ? "matern52" : "gaussian";
}

const char* trend_name(TrendKind t) { return t == TrendKind::Constant ? "constant" : "linear"; }

// ---- CSV ------------------------------------------------------------------

void write_record(std::ofstream& out, const RunRecord& row, bool with_gaps) {
  out << row.iter;
  for (Eigen::Index j = 0; j < row.x.size(); ++j) out << ',' << fmt(row.x(j));
  for (Eigen::Index j = 0; j < row.f.size(); ++j) out << ',' << fmt(row.f(j));
  out << ',' << row.phase << ',' << row.est_index << ',' << fmt(row.min_ratio);
  if (with_gaps) out << ',' << fmt(row.gap_ks) << ',' << fmt(row.gap_cks);
  out << ',' << fmt(row.wall_ms) << '\n';
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// ---- per-repetition execution ---------------------------------------------

Vector noise_free_values(const RunState& state, int row) {
  return state.problem.evaluate(state.X.row(row));
}

void fill_estimate(const RunState& state, const ExperimentConfig& config,
                   const StrategyParams& params, const ReferenceSolution* reference,
                   RunRecord& row) {
  const EquilibriumResult est = report_estimate(state, config.mode, params);
  row.est_index = est.index;
  row.min_ratio = est.min_ratio;
  if (reference == nullptr) {
    row.gap_ks = kNaN;
    row.gap_cks = kNaN;
    return;
  }
  // Gap columns are always scored in the plain KS / CKS frames of the
  // reference; noisy observations are rescored noise-free before comparing.
  const EquilibriumResult ks_est = config.mode == EquilibriumKind::KS
                                       ? est
                                       : report_estimate(state, EquilibriumKind::KS, params);
  row.gap_ks = optimality_gap(noise_free_values(state, ks_est.index), reference->ks_reference());
  const EquilibriumResult cks_est = config.mode == EquilibriumKind::CKS
                                        ? est
                                        : report_estimate(state, EquilibriumKind::CKS, params);
  row.gap_cks =
      optimality_gap(noise_free_values(state, cks_est.index), reference->cks_reference());
}

struct RepOutcome {
  std::vector<RunRecord> rows;
  std::filesystem::path file;
};

RepOutcome run_one_rep(const ExperimentConfig& config, const Problem& problem, int n0,
                       const StrategyParams& params, const ReferenceSolution* reference,
                       int rep, const std::filesystem::path& out_dir) {
  const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(rep);
  char name[32];
  std::snprintf(name, sizeof(name), "rep_%03d.csv", rep);
  RepOutcome outcome;
  outcome.file = out_dir / name;
  std::ofstream out(outcome.file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + outcome.file.string());
  const bool with_gaps = reference != nullptr;
  out << results_header(problem.dim, problem.n_obj, with_gaps) << '\n';

  const auto start = std::chrono::steady_clock::now();
  RunState state =
      init_design(problem, n0, seed, params, config.strategy != StrategyId::Random);
  const double init_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
          .count();

  // Initial-design rows, estimated retroactively from each observation
  // prefix (no models yet, so CKS estimates rank against the observations).
  for (int i = 1; i <= n0; ++i) {
    RunState prefix;
    prefix.problem = problem;
    prefix.run_seed = seed;
    prefix.X = state.X.topRows(i);
    prefix.F = state.F.topRows(i);
    RunRecord row;
    row.iter = i;
    row.x = state.X.row(i - 1);
    row.f = state.F.row(i - 1).transpose();
    row.phase = "init";
    row.wall_ms = i == n0 ? init_ms : 0.0;
    fill_estimate(prefix, config, params, reference, row);
    write_record(out, row, with_gaps);
    out.flush();  // partial results survive a mid-run failure
    outcome.rows.push_back(std::move(row));
  }

  const StepObserver observer = [&](const RunState& s, const StepInfo& info) {
    RunRecord row;
    row.iter = s.evaluations;
    row.x = info.x;
    row.f = info.f;
    row.phase = info.phase;
    row.wall_ms = info.wall_ms;
    fill_estimate(s, config, params, reference, row);
    write_record(out, row, with_gaps);
    out.flush();
    outcome.rows.push_back(std::move(row));
  };

  const int n_new = config.budget - n0;
  switch (config.strategy) {
    case StrategyId::Sur:
      run_sur(state, n_new, params, observer);
      break;
    case StrategyId::BaselineKs:
      baseline_ks_run(state, n_new, params, observer);
      break;
    case StrategyId::BaselineCks:
      baseline_cks_run(state, n_new, params, observer);
      break;
    case StrategyId::Random:
      random_search_run(state, n_new, observer);
      break;
  }
  return outcome;
}

// Linear interpolation between order statistics; NaNs are dropped first.
double quantile(std::vector<double> values, double q) {
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return std::isnan(v); }),
               values.end());
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

std::string iso_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

json config_json(const ExperimentConfig& config) {
  json j;
  j["problem"] = config.problem;
  j["strategy"] = strategy_name(config.strategy);
  j["mode"] = mode_name(config.mode);
  j["budget"] = config.budget;
  j["n0"] = config.n0;
  j["n_star"] = config.n_star;
  j["m_draws"] = config.m_draws;
  j["n_aux"] = config.n_aux;
  j["n_mc"] = config.n_mc;
  j["beta"] = config.beta;
  j["n_large"] = config.n_large;
  if (config.preferences) {
    json prefs = json::array();
    for (const double c : *config.preferences) {
      if (std::isinf(c)) {
        prefs.push_back("inf");
      } else {
        prefs.push_back(c);
      }
    }
    j["preferences"] = prefs;
  }
  j["repetitions"] = config.repetitions;
  j["base_seed"] = config.base_seed;
  j["domain_seed"] = config.domain_seed;
  j["reference"] = config.reference;
  j["kernel"] = kernel_name(config.kernel);
  j["trend"] = trend_name(config.trend);
  j["out_dir"] = config.out_dir;
  j["threads"] = config.threads;
  return j;
}

json equilibrium_json(const EquilibriumResult& e) {
  json j;
  j["index"] = e.index;
  j["min_ratio"] = e.min_ratio;
  j["values"] = std::vector<double>(e.values.data(), e.values.data() + e.values.size());
  j["ratios"] = std::vector<double>(e.ratios.data(), e.ratios.data() + e.ratios.size());
  j["degenerate"] = e.degenerate;
  j["disagreement_warn"] = e.disagreement_warn;
  return j;
}

EquilibriumResult equilibrium_from_json(const json& j, EquilibriumKind kind) {
  EquilibriumResult e;
  e.kind = kind;
  e.index = j.at("index").get<int>();
  e.min_ratio = j.at("min_ratio").get<double>();
  const auto values = j.at("values").get<std::vector<double>>();
  const auto ratios = j.at("ratios").get<std::vector<double>>();
  e.values = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  e.ratios = Eigen::Map<const Vector>(ratios.data(), static_cast<Eigen::Index>(ratios.size()));
  e.degenerate = j.at("degenerate").get<bool>();
  e.disagreement_warn = j.at("disagreement_warn").get<bool>();
  return e;
}

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

// ---- public API ------------------------------------------------------------

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  ExperimentConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "problem") {
      cfg.problem = as_string(value, key);
    } else if (key == "strategy") {
      cfg.strategy = parse_strategy(as_string(value, key));
    } else if (key == "mode") {
      cfg.mode = parse_mode(as_string(value, key));
    } else if (key == "budget") {
      cfg.budget = static_cast<int>(as_int(value, key));
    } else if (key == "n0") {
      cfg.n0 = static_cast<int>(as_int(value, key));
    } else if (key == "n_star") {
      cfg.n_star = static_cast<int>(as_int(value, key));
    } else if (key == "m_draws") {
      cfg.m_draws = static_cast<int>(as_int(value, key));
    } else if (key == "n_aux") {
      cfg.n_aux = static_cast<int>(as_int(value, key));
    } else if (key == "n_mc") {
      cfg.n_mc = static_cast<int>(as_int(value, key));
    } else if (key == "beta") {
      cfg.beta = as_double(value, key);
    } else if (key == "n_large") {
      cfg.n_large = as_int(value, key);
    } else if (key == "preferences") {
      cfg.preferences = parse_preferences(value);
    } else if (key == "repetitions") {
      cfg.repetitions = static_cast<int>(as_int(value, key));
    } else if (key == "base_seed") {
      cfg.base_seed = as_seed(value, key);
    } else if (key == "domain_seed") {
      cfg.domain_seed = as_seed(value, key);
    } else if (key == "reference") {
      cfg.reference = as_string(value, key);
    } else if (key == "kernel") {
      cfg.kernel = parse_kernel(as_string(value, key));
    } else if (key == "trend") {
      cfg.trend = parse_trend(as_string(value, key));
    } else if (key == "out_dir") {
      cfg.out_dir = as_string(value, key);
    } else if (key == "threads") {
      cfg.threads = static_cast<int>(as_int(value, key));
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  if (cfg.problem.empty()) throw ConfigError("config needs a problem id");
  if (cfg.budget <= 0) throw ConfigError("config needs a positive budget");
  if (cfg.n0 < 0) throw ConfigError("n0 must be nonnegative (0 = 2 * dimension)");
  if (cfg.n_star <= 0 || cfg.m_draws < 2 || cfg.n_aux <= 0 || cfg.n_mc <= 0 ||
      cfg.n_large <= 0)
    throw ConfigError("n_star, n_aux, n_mc, n_large must be positive and m_draws >= 2");
  if (cfg.repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (cfg.threads < 1) throw ConfigError("threads must be at least 1");
  if (cfg.mode == EquilibriumKind::KSpref && !cfg.preferences)
    throw ConfigError("mode KSpref requires a preference vector");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::string results_header(int dim, int n_obj, bool with_gaps) {
  std::string header = "iter";
  for (int j = 1; j <= dim; ++j) header += ",x_" + std::to_string(j);
  for (int j = 1; j <= n_obj; ++j) header += ",f_" + std::to_string(j);
  header += ",phase,est_index,min_ratio";
  if (with_gaps) header += ",gap_ks,gap_cks";
  header += ",wall_ms";
  return header;
}

ResultTable read_result_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read result file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty result file " + path.string());
  const auto names = split_csv(line);
  ResultTable table;
  for (const auto& nm : names) {
    if (nm.rfind("x_", 0) == 0) ++table.dim;
    if (nm.rfind("f_", 0) == 0) ++table.n_obj;
    if (nm == "gap_ks") table.has_gaps = true;
  }
  const std::size_t expected = 5u + static_cast<std::size_t>(table.dim + table.n_obj) +
                               (table.has_gaps ? 2u : 0u);
  if (names.empty() || names.front() != "iter" || names.size() != expected)
    throw IoError("unrecognized results header in " + path.string());

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != names.size())
      throw IoError("malformed results row in " + path.string());
    RunRecord row;
    std::size_t k = 0;
    row.iter = std::stoi(fields[k++]);
    row.x.resize(table.dim);
    for (int j = 0; j < table.dim; ++j) row.x(j) = std::strtod(fields[k++].c_str(), nullptr);
    row.f.resize(table.n_obj);
    for (int j = 0; j < table.n_obj; ++j) row.f(j) = std::strtod(fields[k++].c_str(), nullptr);
    row.phase = fields[k++];
    row.est_index = std::stoi(fields[k++]);
    row.min_ratio = std::strtod(fields[k++].c_str(), nullptr);
    if (table.has_gaps) {
      row.gap_ks = std::strtod(fields[k++].c_str(), nullptr);
      row.gap_cks = std::strtod(fields[k++].c_str(), nullptr);
    }
    row.wall_ms = std::strtod(fields[k++].c_str(), nullptr);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::filesystem::path resolve_out_dir(const std::string& out_dir) {
  std::filesystem::path p = out_dir.empty() ? std::filesystem::path("ksbo_out")
                                            : std::filesystem::path(out_dir);
  if (p.is_absolute()) return p;
  const char* root = std::getenv("KSBO_OUT_ROOT");
  if (root != nullptr && *root != '\0') return std::filesystem::path(root) / p;
  return p;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const Problem problem = parse_problem_id(config.problem, config.domain_seed,
                                           mix_seed(config.domain_seed, seed_tag::kNoise));
  const int p = problem.n_obj;
  const int n0 = config.n0 > 0 ? config.n0 : 2 * problem.dim;
  if (n0 < 2) throw ConfigError("initial design needs at least two points");
  if (config.budget <= n0)
    throw ConfigError("budget (" + std::to_string(config.budget) +
                      ") must exceed the initial design size (" + std::to_string(n0) + ")");

  StrategyParams params;
  params.mode = config.mode;
  params.n_star = config.n_star;
  params.m_draws = config.m_draws;
  params.n_aux = config.n_aux;
  params.n_mc = config.n_mc;
  params.beta = config.beta;
  params.n_large = config.n_large;
  params.kernel = config.kernel;
  params.trend = config.trend;
  params.threads = 1;  // repetitions parallelize, each run stays serial
  if (config.preferences) {
    if (static_cast<int>(config.preferences->size()) != p)
      throw ConfigError("preference vector needs one bound per objective (" +
                        std::to_string(p) + ")");
    PreferenceSpec prefs;
    prefs.bounds = Eigen::Map<const Vector>(config.preferences->data(),
                                            static_cast<Eigen::Index>(config.preferences->size()));
    params.preferences = prefs;
  } else if (config.mode == EquilibriumKind::KSpref) {
    throw ConfigError("mode KSpref requires a preference vector");
  }
  if (config.strategy == StrategyId::Sur) {
    const int extras = config.mode == EquilibriumKind::KS     ? 2 * p
                       : config.mode == EquilibriumKind::KSpref ? p
                                                                : 0;
    if (config.n_star <= extras)
      throw ConfigError("n_star must exceed the " + std::to_string(extras) +
                        " directed integration points");
  }

  std::optional<ReferenceSolution> reference;
  if (!config.reference.empty()) {
    reference = load_reference(config.reference);
    if (reference->problem_id != problem.id)
      throw ConfigError("reference problem '" + reference->problem_id +
                        "' does not match config problem '" + problem.id + "'");
    if (reference->domain_seed != config.domain_seed)
      throw ConfigError("reference domain seed does not match the config");
  }

  ExperimentResult result;
  result.out_dir = resolve_out_dir(config.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(result.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + result.out_dir.string());

  const ReferenceSolution* ref_ptr = reference ? &*reference : nullptr;
  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(config.repetitions));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(config.repetitions));
  parallel_for(config.repetitions, config.threads, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t r = lo; r < hi; ++r) {
      try {
        outcomes[static_cast<std::size_t>(r)] = run_one_rep(
            config, problem, n0, params, ref_ptr, static_cast<int>(r), result.out_dir);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  });
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
  for (const auto& outcome : outcomes) result.rep_files.push_back(outcome.file);

  // Per-iteration quantiles across repetitions.
  result.summary_file = result.out_dir / "summary.csv";
  {
    std::ofstream out(result.summary_file, std::ios::trunc);
    if (!out) throw IoError("cannot write " + result.summary_file.string());
    const bool with_gaps = reference.has_value();
    out << "iter,n_reps,min_ratio_q25,min_ratio_median,min_ratio_q75";
    if (with_gaps) out << ",gap_ks_q25,gap_ks_median,gap_ks_q75,gap_cks_q25,gap_cks_median,gap_cks_q75";
    out << '\n';
    for (int it = 1; it <= config.budget; ++it) {
      std::vector<double> ratios;
      std::vector<double> gks;
      std::vector<double> gcks;
      for (const auto& outcome : outcomes) {
        const RunRecord& row = outcome.rows[static_cast<std::size_t>(it - 1)];
        ratios.push_back(row.min_ratio);
        gks.push_back(row.gap_ks);
        gcks.push_back(row.gap_cks);
      }
      out << it << ',' << outcomes.size() << ',' << fmt(quantile(ratios, 0.25)) << ','
          << fmt(quantile(ratios, 0.5)) << ',' << fmt(quantile(ratios, 0.75));
      if (with_gaps)
        out << ',' << fmt(quantile(gks, 0.25)) << ',' << fmt(quantile(gks, 0.5)) << ','
            << fmt(quantile(gks, 0.75)) << ',' << fmt(quantile(gcks, 0.25)) << ','
            << fmt(quantile(gcks, 0.5)) << ',' << fmt(quantile(gcks, 0.75));
      out << '\n';
    }
  }

  // Timestamps and provenance live here so the result files above stay
  // byte-reproducible.
  result.metadata_file = result.out_dir / "metadata.json";
  {
    json meta;
    meta["config"] = config_json(config);
    meta["problem"] = {{"id", problem.id},
                       {"dim", problem.dim},
                       {"n_obj", problem.n_obj},
                       {"n0_effective", n0}};
    if (reference) {
      meta["reference"] = {{"path", config.reference},
                           {"domain_hash", reference->domain_hash}};
    } else {
      meta["reference"] = nullptr;
    }
    meta["created_utc"] = iso_timestamp();
    meta["generator"] = "ksbo 1.0.0";
    std::ofstream out(result.metadata_file, std::ios::trunc);
    if (!out) throw IoError("cannot write " + result.metadata_file.string());
    out << meta.dump(2) << '\n';
  }
  return result;
}

void save_reference(const ReferenceSolution& reference, const std::filesystem::path& path) {
  json j;
  j["problem_id"] = reference.problem_id;
  j["domain_seed"] = reference.domain_seed;
  j["aux_seed"] = reference.aux_seed;
  j["domain_size"] = reference.domain_size;
  j["aux_size"] = reference.aux_size;
  j["aux_is_full_domain"] = reference.aux_is_full_domain;
  j["utopia"] =
      std::vector<double>(reference.utopia.data(), reference.utopia.data() + reference.utopia.size());
  j["nadir"] =
      std::vector<double>(reference.nadir.data(), reference.nadir.data() + reference.nadir.size());
  j["ks"] = equilibrium_json(reference.ks);
  j["cks"] = equilibrium_json(reference.cks);
  j["domain_hash"] = reference.domain_hash;
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write reference file " + path.string());
  out << j.dump(2) << '\n';
}

ReferenceSolution load_reference(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read reference file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  json j;
  try {
    j = json::parse(text.str());
  } catch (const json::parse_error& e) {
    throw IoError("reference file " + path.string() + ": " + e.what());
  }

  ReferenceSolution ref;
  try {
    ref.problem_id = j.at("problem_id").get<std::string>();
    ref.domain_seed = j.at("domain_seed").get<std::uint64_t>();
    ref.aux_seed = j.at("aux_seed").get<std::uint64_t>();
    ref.domain_size = j.at("domain_size").get<std::int64_t>();
    ref.aux_size = j.at("aux_size").get<std::int64_t>();
    ref.aux_is_full_domain = j.at("aux_is_full_domain").get<bool>();
    ref.utopia = vector_from_json(j.at("utopia"));
    ref.nadir = vector_from_json(j.at("nadir"));
    ref.ks = equilibrium_from_json(j.at("ks"), EquilibriumKind::KS);
    ref.cks = equilibrium_from_json(j.at("cks"), EquilibriumKind::CKS);
    ref.domain_hash = j.at("domain_hash").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw IoError("reference file " + path.string() + ": " + e.what());
  }

  // Rebuild the rank table from the same seeded sample and check the domain
  // actually regenerates to what the reference was computed on.
  const Problem problem = parse_problem_id(ref.problem_id, ref.domain_seed);
  if (!problem.domain || problem.domain->size != ref.domain_size)
    throw IoError("reference file " + path.string() + ": domain size mismatch");
  std::uint64_t hash = 0;
  const Matrix aux_values = reference_aux_values(problem, ref.aux_seed, &hash);
  if (hash != ref.domain_hash)
    throw IoError("reference file " + path.string() +
                  ": domain hash mismatch (different domain seed or generator)");
  if (aux_values.rows() != ref.aux_size)
    throw IoError("reference file " + path.string() + ": auxiliary sample size mismatch");
  ref.aux_ranks = std::make_shared<RankTable>(make_rank_table(aux_values));
  return ref;
}

PlotKind parse_plot_kind(const std::string& name) {
  if (name == "gap_curves") return PlotKind::GapCurves;
  if (name == "parallel_coordinates") return PlotKind::ParallelCoordinates;
  if (name == "pairwise_projections") return PlotKind::PairwiseProjections;
  if (name == "copula_projections") return PlotKind::CopulaProjections;
  throw ConfigError("unknown plot kind '" + name + "'");
}

std::filesystem::path emit_plot_data(const std::filesystem::path& run_dir, PlotKind kind,
                                     const std::filesystem::path& out) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("rep_", 0) == 0 && name.size() > 8 && name.substr(name.size() - 4) == ".csv")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no rep_*.csv files in " + run_dir.string());

  std::vector<ResultTable> tables;
  for (const auto& file : files) tables.push_back(read_result_file(file));
  const int p = tables.front().n_obj;
  for (const auto& t : tables)
    if (t.n_obj != p || t.rows.size() != tables.front().rows.size())
      throw IoError("repetition files in " + run_dir.string() + " are inconsistent");

  const char* base = kind == PlotKind::GapCurves              ? "gap_curves.csv"
                     : kind == PlotKind::ParallelCoordinates  ? "parallel_coordinates.csv"
                     : kind == PlotKind::PairwiseProjections ? "pairwise_projections.csv"
                                                              : "copula_projections.csv";
  const std::filesystem::path dest = out.empty() ? run_dir / "plots" / base : out;
  if (!dest.parent_path().empty()) std::filesystem::create_directories(dest.parent_path());
  std::ofstream os(dest, std::ios::trunc);
  if (!os) throw IoError("cannot write " + dest.string());

  if (kind == PlotKind::GapCurves) {
    for (const auto& t : tables)
      if (!t.has_gaps)
        throw IoError("gap_curves needs runs with a reference (no gap columns found)");
    // Gap values are floored at the reporting thresholds before the
    // quantiles (log-scale plots cannot show zero).
    os << "iter,n_reps,gap_ks_q25,gap_ks_median,gap_ks_q75,"
          "gap_cks_q25,gap_cks_median,gap_cks_q75\n";
    const std::size_t n_rows = tables.front().rows.size();
    for (std::size_t i = 0; i < n_rows; ++i) {
      std::vector<double> gks;
      std::vector<double> gcks;
      for (const auto& t : tables) {
        gks.push_back(std::max(t.rows[i].gap_ks, 1e-3));
        gcks.push_back(std::max(t.rows[i].gap_cks, 1e-4));
      }
      os << tables.front().rows[i].iter << ',' << tables.size() << ','
         << fmt(quantile(gks, 0.25)) << ',' << fmt(quantile(gks, 0.5)) << ','
         << fmt(quantile(gks, 0.75)) << ',' << fmt(quantile(gcks, 0.25)) << ','
         << fmt(quantile(gcks, 0.5)) << ',' << fmt(quantile(gcks, 0.75)) << '\n';
    }
    return dest;
  }

  if (kind == PlotKind::ParallelCoordinates) {
    os << "rep,kind,iter";
    for (int j = 1; j <= p; ++j) os << ",v_" << j;
    os << ",dominated\n";
    for (std::size_t r = 0; r < tables.size(); ++r) {
      const auto& rows = tables[r].rows;
      Matrix F(static_cast<Eigen::Index>(rows.size()), p);
      for (std::size_t i = 0; i < rows.size(); ++i)
        F.row(static_cast<Eigen::Index>(i)) = rows[i].f.transpose();
      const auto mask = pareto_filter(F);
      const auto [u, nadir] = utopia_nadir(F, mask);
      // Affine normalization per objective: utopia -> 0, nadir -> 1.
      os << r << ",utopia,0";
      for (int j = 0; j < p; ++j) os << ',' << fmt(0.0);
      os << ",0\n";
      os << r << ",nadir,0";
      for (int j = 0; j < p; ++j) os << ',' << fmt(1.0);
      os << ",0\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        os << r << ",obs," << rows[i].iter;
        for (int j = 0; j < p; ++j) {
          const double denom = nadir(j) - u(j);
          const double v = denom > 0.0 ? (F(static_cast<Eigen::Index>(i), j) - u(j)) / denom : 0.0;
          os << ',' << fmt(v);
        }
        os << ',' << (mask[i] ? 0 : 1) << '\n';
      }
    }
    return dest;
  }

  const bool copula = kind == PlotKind::CopulaProjections;
  os << "rep,obj_a,obj_b,iter," << (copula ? "r_a,r_b" : "f_a,f_b") << ",dominated\n";
  for (std::size_t r = 0; r < tables.size(); ++r) {
    const auto& rows = tables[r].rows;
    Matrix F(static_cast<Eigen::Index>(rows.size()), p);
    for (std::size_t i = 0; i < rows.size(); ++i)
      F.row(static_cast<Eigen::Index>(i)) = rows[i].f.transpose();
    const auto mask = pareto_filter(F);
    const Matrix values = copula ? rank_transform(F, F) : F;
    for (int a = 0; a < p; ++a) {
      for (int b = a + 1; b < p; ++b) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          os << r << ',' << a + 1 << ',' << b + 1 << ',' << rows[i].iter << ','
             << fmt(values(static_cast<Eigen::Index>(i), a)) << ','
             << fmt(values(static_cast<Eigen::Index>(i), b)) << ',' << (mask[i] ? 0 : 1)
             << '\n';
        }
      }
    }
  }
  return dest;
}

}  // namespace ksbo

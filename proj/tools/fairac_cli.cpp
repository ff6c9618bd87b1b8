// fairac: run attribute-completion experiments from the command line.
//
//   fairac run         --nodes N.csv --edges E.txt --sensitive country --label SALARY
//   fairac sweep-alpha ... [--alphas 0.1,0.3,0.5,0.8] [--modes fairac,gcn_avg]
//   fairac sweep-beta  ... [--betas 0,0.2,0.4,0.7,0.8,1]
//   fairac synth       --out DIR [--seed S]
//
// Every experiment option may also come from --config FILE (key = value
// lines); flags given on the command line win.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairac.hpp"

using namespace fairac;

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct ExperimentFlags {
  std::string config_file;
  std::map<std::string, std::string> values;  // config key -> raw flag value
  bool verbose = false;
  bool quiet = false;
};

void add_experiment_flags(CLI::App* app, ExperimentFlags& f) {
  app->add_option("--config", f.config_file, "Config file with key = value lines")->check(CLI::ExistingFile);
  const std::vector<std::pair<std::string, std::string>> flags{
      {"nodes", "Node CSV (header row, first column is the node id)"},
      {"edges", "Edge list, two ids per line"},
      {"sensitive", "Sensitive column name"},
      {"label", "Label column name"},
      {"drop", "Comma-separated columns to ignore"},
      {"alpha", "Attribute missing rate in [0, 1)"},
      {"beta", "Fairness weight"},
      {"heads", "Attention heads"},
      {"mode", "fairac, baseac or gcn_avg"},
      {"seeds", "Comma-separated seeds"},
      {"threshold", "Validation accuracy threshold for model selection"},
      {"epochs-ac", "Attribute-completion epochs"},
      {"epochs-gcn", "GCN epochs"},
      {"out", "Output directory"},
      {"cache", "DeepWalk embedding cache directory"},
      {"walk-length", "Random walk length"},
      {"walks-per-node", "Walks started per node"},
      {"window", "Skip-gram window"},
      {"walk-dim", "Topological embedding size"},
      {"walk-epochs", "Skip-gram epochs"},
      {"lt-mode", "uniform_target or negated_bce"},
  };
  for (const auto& [name, help] : flags) {
    std::string key = name;
    std::replace(key.begin(), key.end(), '-', '_');
    app->add_option_function<std::string>(
        "--" + name, [&f, key](const std::string& v) { f.values[key] = v; }, help);
  }
  app->add_flag("-v,--verbose", f.verbose, "Progress messages");
  app->add_flag("-q,--quiet", f.quiet, "Errors only");
}

ExperimentConfig resolve(const ExperimentFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_file.empty()) cfg = load_config_file(f.config_file);
  for (const auto& [k, v] : f.values) set_config_value(cfg, k, v);
  if (cfg.dataset.node_file.empty() || cfg.dataset.edge_file.empty() ||
      cfg.dataset.sensitive_column.empty() || cfg.dataset.label_column.empty()) {
    throw ConfigError("--nodes, --edges, --sensitive and --label are required");
  }
  cfg.validate();
  log::set_level(f.quiet ? log::Level::quiet : f.verbose ? log::Level::info : log::Level::warn);
  return cfg;
}

std::vector<double> parse_reals(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& part : detail::split_list(s)) out.push_back(detail::parse_real(what, part));
  if (out.empty()) throw ConfigError(std::string(what) + " list is empty");
  return out;
}

void print_rows(const std::vector<ExperimentResult>& results) {
  write_results_csv(std::cout, [&] {
    std::vector<Aggregate> rows;
    for (const auto& r : results) rows.push_back(r.aggregate);
    return rows;
  }());
}

// Fails the command when a whole experiment produced nothing.
int status_of(const std::vector<ExperimentResult>& results) {
  int rc = 0;
  for (const auto& r : results) {
    for (const auto& s : r.seeds)
      if (!s.ok) std::cerr << "seed " << s.seed << " failed: " << s.failure << '\n';
    if (r.aggregate.runs == 0) rc = kRuntimeError;
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair attribute completion on graphs with attribute-less nodes"};
  app.require_subcommand(1);

  ExperimentFlags run_flags, alpha_flags, beta_flags;
  auto* run = app.add_subcommand("run", "One experiment over all seeds");
  add_experiment_flags(run, run_flags);

  auto* sweep_alpha = app.add_subcommand("sweep-alpha", "Experiments over missing rates and modes");
  add_experiment_flags(sweep_alpha, alpha_flags);
  std::string alphas = "0.1,0.3,0.5,0.8", modes = "fairac,gcn_avg";
  sweep_alpha->add_option("--alphas", alphas, "Missing rates")->capture_default_str();
  sweep_alpha->add_option("--modes", modes, "Modes to compare")->capture_default_str();

  auto* sweep_beta = app.add_subcommand("sweep-beta", "FairAC over fairness weights");
  add_experiment_flags(sweep_beta, beta_flags);
  std::string betas = "0,0.2,0.4,0.7,0.8,1";
  sweep_beta->add_option("--betas", betas, "Fairness weights")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Write a synthetic NBA-shaped dataset");
  std::string synth_out;
  std::uint64_t synth_seed = SyntheticSpec{}.seed;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) {
      const ExperimentConfig cfg = resolve(run_flags);
      const std::vector<ExperimentResult> results{run_experiment(cfg)};
      emit_report(results, cfg.out_dir);
      print_rows(results);
      return status_of(results);
    }
    if (*sweep_alpha) {
      const ExperimentConfig cfg = resolve(alpha_flags);
      std::vector<Mode> mode_list;
      for (const auto& m : detail::split_list(modes)) mode_list.push_back(parse_mode(m));
      const auto values = parse_reals(alphas, "alphas");
      const auto results = run_alpha_sweep(cfg, load_dataset(cfg.dataset), values, mode_list);
      emit_report(results, cfg.out_dir);
      print_rows(results);
      return status_of(results);
    }
    if (*sweep_beta) {
      const ExperimentConfig cfg = resolve(beta_flags);
      const auto sweep = run_beta_sweep(cfg, load_dataset(cfg.dataset), parse_reals(betas, "betas"));
      emit_report(sweep.runs, cfg.out_dir);
      write_beta_series(sweep, cfg.out_dir / "beta_series.csv");
      print_rows(sweep.runs);
      std::cout << "spearman(beta, combined) = " << sweep.spearman_combined << '\n';
      return status_of(sweep.runs);
    }
    if (*synth) {
      SyntheticSpec spec;
      spec.seed = synth_seed;
      const DatasetSpec ds = write_dataset(make_synthetic_graph(spec), synth_out);
      std::cout << "wrote " << ds.node_file.string() << " and " << ds.edge_file.string()
                << " (--sensitive " << ds.sensitive_column << " --label " << ds.label_column << ")\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}

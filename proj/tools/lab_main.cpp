#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lab/config.hpp"
#include "lab/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeAbort = 3;

int run_command(const std::string& config_path, const std::string& out_dir,
                std::size_t workers, const std::string& format) {
  lab::ExperimentConfig cfg = lab::parse_config_file(config_path);
  if (const auto seed = lab::seed_override_from_env()) {
    cfg.master_seed = *seed;
  }

  const lab::ExperimentResult result = lab::run_experiment(cfg, workers);

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path base =
      std::filesystem::path(out_dir) / cfg.experiment_id;
  std::vector<std::string> written;
  if (format == "csv" || format == "both") {
    const std::string path = base.string() + "_summary.csv";
    lab::write_text_file(path, lab::summary_csv(result.summaries));
    written.push_back(path);
  }
  if (format == "json" || format == "both") {
    const std::string path = base.string() + "_summary.json";
    lab::write_text_file(path, lab::summary_json(result.summaries));
    written.push_back(path);
  }
  {
    const std::string path = base.string() + "_raw.csv.gz";
    lab::write_gzip_file(path, lab::raw_csv(result.raw));
    written.push_back(path);
  }

  std::cout << lab::summary_csv(result.summaries);
  if (result.failed_replications > 0) {
    std::cout << "# failed replications: " << result.failed_replications
              << " (see the raw table's error column)\n";
  }
  for (const std::string& path : written) {
    std::cout << "# wrote " << path << "\n";
  }
  return kExitOk;
}

int list_command() {
  for (const lab::ExperimentInfo& info : lab::list_experiments()) {
    std::printf("%-24s %s\n", info.id.c_str(), info.summary.c_str());
  }
  return kExitOk;
}

int describe_command(const std::string& id) {
  const lab::ExperimentInfo& info = lab::describe_experiment(id);
  std::cout << info.id << "\n  " << info.summary << "\n\nparameters:\n";
  if (info.parameters.empty()) {
    std::cout << "  (none)\n";
  }
  for (const auto& [name, doc] : info.parameters) {
    std::printf("  %-18s %s\n", name.c_str(), doc.c_str());
  }
  std::cout << "\nconfig keys: [experiment] id, reps, size_grid, "
               "master_seed; [params] the table above.\n"
               "LAB_SEED overrides master_seed.\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo laboratory for frequentist versus Bayesian "
               "estimator comparisons"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::size_t workers = 1;
  std::string format = "csv";
  CLI::App* run = app.add_subcommand(
      "run", "Run an experiment from a config file and write results");
  run->add_option("config", config_path, "Configuration file path")
      ->required();
  run->add_option("--out", out_dir, "Output directory (default .)");
  run->add_option("--workers", workers,
                  "Worker threads; results do not depend on this")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}));
  run->add_option("--format", format, "Summary format (default csv)")
      ->check(CLI::IsMember({"csv", "json", "both"}));

  CLI::App* list = app.add_subcommand("list", "List registered experiments");

  std::string describe_id;
  CLI::App* describe =
      app.add_subcommand("describe", "Show one experiment's parameters");
  describe->add_option("id", describe_id, "Experiment id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (run->parsed()) {
      return run_command(config_path, out_dir, workers, format);
    }
    if (list->parsed()) {
      return list_command();
    }
    if (describe->parsed()) {
      return describe_command(describe_id);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntimeAbort;
  }
  return kExitConfigError;
}

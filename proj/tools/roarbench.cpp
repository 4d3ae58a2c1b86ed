// roarbench: command-line front end for the ROAR/KAR benchmark.
//
// Exit codes: 0 success, 1 validation error, 2 acceptance failure,
// 3 runtime error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "roar/config.hpp"
#include "roar/errors.hpp"
#include "roar/experiment.hpp"
#include "roar/persistence.hpp"

namespace {

enum ExitCode : int { kOk = 0, kValidation = 1, kAcceptance = 2, kRuntime = 3 };

struct CommonFlags {
  std::string config;
  std::string output;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* opt = cmd->add_option("--config", flags.config, "Experiment configuration file");
  if (config_required) opt->required();
  cmd->add_option("--output", flags.output, "Results directory (overrides the config)");
  cmd->add_option("--workers", flags.workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", flags.seed, "Base seed (overrides the config)");
}

roar::ExperimentConfig load_config(const CommonFlags& flags, bool validate = true) {
  roar::ExperimentConfig config;
  if (!flags.config.empty()) {
    std::string text;
    try {
      text = roar::read_file(flags.config);
    } catch (const roar::Error& e) {
      throw roar::ConfigError(fmt::format("cannot read config: {}", e.what()));
    }
    config = roar::parse_config(text, validate);
  }
  if (!flags.output.empty()) config.output = flags.output;
  if (flags.workers) config.workers = *flags.workers;
  if (flags.seed) config.seed = *flags.seed;
  if (validate) config.validate();
  return config;
}

int toy_validate(const CommonFlags& flags, std::size_t replicates) {
  // The estimator grid is irrelevant here, so only the dataset must be valid.
  roar::ExperimentConfig config = load_config(flags, false);
  if (config.dataset.kind != roar::DatasetKind::Toy) {
    throw roar::ConfigError("toy-validate needs a toy dataset", "dataset.kind");
  }
  roar::ToyConfig toy = config.dataset.toy;
  if (flags.seed) toy.seed = *flags.seed;
  roar::ToyValidateOptions options;
  options.replicates = replicates;
  options.workers = config.workers;

  const roar::ToyValidateReport report = roar::toy_validate(toy, options);
  std::filesystem::create_directories(config.output);
  const auto csv_path = std::filesystem::path(config.output) / "toy_validate.csv";
  roar::atomic_write(csv_path, report.csv());

  std::cout << report.csv();
  for (const roar::ToyCheck& check : report.checks) {
    fmt::print("{} {}: {}\n", check.passed ? "PASS" : "FAIL", check.name, check.detail);
  }
  if (!report.passed()) {
    for (const roar::ToyCheck& check : report.checks) {
      if (!check.passed) fmt::print(std::cerr, "toy-validate: check '{}' failed\n", check.name);
    }
    return kAcceptance;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ROAR / KAR feature-importance benchmark"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::optional<std::size_t> max_cells;
  std::size_t replicates = 5;
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress records on stderr");

  auto* validate = app.add_subcommand("validate-config", "Parse and validate a config, echo it back");
  add_common(validate, flags, true);

  auto* toy = app.add_subcommand("toy-validate", "Retrain-vs-no-retrain check on the synthetic toy task");
  add_common(toy, flags, false);
  toy->add_option("--replicates", replicates, "Independent datasets per point")->check(CLI::PositiveNumber);

  auto* estimate = app.add_subcommand("estimate", "Train the checkpoint and write importance estimates");
  add_common(estimate, flags, true);

  auto* modify = app.add_subcommand("modify", "Write modified datasets from existing estimates");
  add_common(modify, flags, true);

  auto* run = app.add_subcommand("run", "Run (or resume) the full estimate/modify/retrain grid");
  add_common(run, flags, true);
  run->add_option("--max-cells", max_cells, "Stop after this many pending cells")->group("");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Aggregate a results directory into CSVs");
  report->add_option("--output,dir", report_dir, "Results directory")->required();

  auto* deletion = app.add_subcommand("deletion-metric", "Score modified test splits without retraining");
  add_common(deletion, flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  roar::RunOptions options;
  if (!quiet) options.progress = &std::cerr;

  try {
    if (*validate) {
      std::cout << roar::serialize_config(load_config(flags));
      return kOk;
    }
    if (*toy) return toy_validate(flags, replicates);
    if (*estimate) {
      const std::size_t n = roar::cmd_estimate(load_config(flags), options);
      fmt::print("wrote estimates for {} estimator(s)\n", n);
      return kOk;
    }
    if (*modify) {
      const std::size_t n = roar::cmd_modify(load_config(flags), options);
      fmt::print("wrote {} modified dataset(s)\n", n);
      return kOk;
    }
    if (*run) {
      options.max_cells = max_cells;
      const roar::RunSummary s = roar::cmd_run(load_config(flags), options);
      fmt::print("cells: {} total, {} skipped, {} processed, {} failed; {} training run(s){}\n", s.cells_total,
                 s.cells_skipped, s.cells_processed, s.cells_failed, s.training_runs,
                 s.complete ? "" : " (incomplete)");
      return kOk;
    }
    if (*report) {
      const roar::ReportSummary s = roar::cmd_report(report_dir);
      fmt::print("cells: {} ({} incomplete, {} failed); records: {}; aggregate rows: {}\n", s.cells,
                 s.incomplete, s.failures, s.records, s.aggregate_rows);
      return kOk;
    }
    if (*deletion) {
      const roar::ResultGrid grid = roar::cmd_deletion_metric(load_config(flags), options);
      std::cout << grid.records_csv();
      return kOk;
    }
  } catch (const roar::ConfigError& e) {
    fmt::print(std::cerr, "config error: {}\n", e.what());
    return kValidation;
  } catch (const roar::IntegrityError& e) {
    fmt::print(std::cerr, "integrity error in {}: {}\n", e.cell(), e.what());
    return kRuntime;
  } catch (const std::exception& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return kRuntime;
  }
  return kRuntime;
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "roar/config.hpp"
#include "roar/pipeline.hpp"
#include "roar/synthetic.hpp"

namespace roar {

/// Materializes the dataset described by `spec` (generated or loaded).
SplitDataset load_dataset(const DatasetSpec& spec);

/// Per-estimator settings for a dataset: the ensemble noise stddev is
/// noise_fraction times the (max - min) range of the train features.
EstimatorSettings estimator_settings(const ExperimentConfig& config, const std::string& estimator_id,
                                     const SplitDataset& data);

/// Directory name of one grid cell, e.g. `sg-grad__roar__t0.3`.
std::string cell_name(const std::string& estimator_id, ModificationMode mode, double threshold);

struct RunOptions {
  /// Stop after processing this many pending cells (simulates an interrupt).
  std::optional<std::size_t> max_cells;
  /// Line-delimited JSON progress records; null for silence.
  std::ostream* progress = nullptr;
};

struct RunSummary {
  std::size_t cells_total = 0;
  std::size_t cells_skipped = 0;
  std::size_t cells_processed = 0;
  std::size_t cells_failed = 0;
  /// Models trained in this invocation, checkpoint included.
  std::size_t training_runs = 0;
  bool complete = false;
};

/// Full estimate -> modify -> retrain grid under `config.output`:
///
///   config.ini                  echo of the effective config
///   estimates/<id>.*            estimates from the unmodified-data checkpoint
///   cells/<cell>/               modified dataset, records.csv, cell.txt
///
/// Cells with a cell.txt manifest are skipped, so rerunning a finished
/// directory trains nothing. Once every cell is done the report is written.
RunSummary cmd_run(const ExperimentConfig& config, const RunOptions& options = {});

struct ReportSummary {
  std::size_t cells = 0;
  std::size_t incomplete = 0;
  std::size_t failures = 0;
  std::size_t records = 0;
  std::size_t aggregate_rows = 0;
};

/// Reads every cell under `results_dir/cells` and writes records.csv,
/// aggregate.csv, failures.csv and plot data under plots/. Cells without a
/// manifest are skipped; a corrupt manifest raises IntegrityError.
ReportSummary cmd_report(const std::filesystem::path& results_dir);

/// Trains the checkpoint and writes estimates for every configured
/// estimator to `config.output/estimates`. Returns the number written.
std::size_t cmd_estimate(const ExperimentConfig& config, const RunOptions& options = {});

/// Writes one modified dataset per grid cell to `config.output/datasets`
/// from previously written estimates. Returns the number written.
std::size_t cmd_modify(const ExperimentConfig& config, const RunOptions& options = {});

/// Scores ROAR-modified test splits with the frozen checkpoint and writes
/// `config.output/deletion.csv`.
ResultGrid cmd_deletion_metric(const ExperimentConfig& config, const RunOptions& options = {});

struct ToyValidateOptions {
  std::vector<double> thresholds{0.0, 0.125, 0.25, 0.5, 0.75, 0.875, 1.0};
  /// Independent datasets (fresh a, d) averaged per point.
  std::size_t replicates = 5;
  double ridge = 1e-8;
  std::size_t workers = 1;
};

struct ToyPoint {
  std::string metric;  // "roar" or "deletion"
  ToyRanking ranking = ToyRanking::GroundTruth;
  double threshold = 0.0;
  double accuracy = 0.0;  // mean over replicates
};

struct ToyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ToyValidateReport {
  std::vector<ToyPoint> points;
  std::vector<ToyCheck> checks;
  double seconds = 0.0;

  bool passed() const;
  std::optional<double> accuracy(const std::string& metric, ToyRanking ranking, double threshold) const;
  /// `metric,ranking,threshold,accuracy`
  std::string csv() const;
};

/// Least-squares ROAR and deletion curves for the three reference rankings
/// on the toy task, plus the shape checks on those curves.
ToyValidateReport toy_validate(const ToyConfig& base, const ToyValidateOptions& options = {});

}  // namespace roar

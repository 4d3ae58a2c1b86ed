#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "roar/dataset.hpp"
#include "roar/estimators.hpp"
#include "roar/train.hpp"

namespace roar {

enum class Granularity { Feature, Pixel };

/// Feature (or pixel) indices ordered from most to least important.
struct Ranking {
  std::vector<std::size_t> order;

  std::size_t size() const { return order.size(); }
  friend bool operator==(const Ranking&, const Ranking&) = default;
};

/// Descending by score with ties broken by ascending index. Pixel
/// granularity sums scores over the trailing channel axis of an (H, W, C)
/// estimate first.
Ranking rank_features(const ImportanceEstimate& estimate, Granularity granularity);
Ranking rank_scores(std::span<const double> scores);

enum class ModificationMode { Roar, Kar };

const char* mode_name(ModificationMode mode);
ModificationMode parse_mode(const std::string& name);

/// `replacement` holds either one value per channel or one value per
/// feature of the sample.
struct ModificationSpec {
  double threshold = 0.0;
  ModificationMode mode = ModificationMode::Roar;
  std::vector<double> replacement;
};

/// Number of top-ranked units touched at threshold t: ceil(t * units), with
/// products within 1e-9 of an integer snapped to it so that e.g. 0.7 * 10
/// counts as 7.
std::size_t top_count(double threshold, std::size_t units);

/// ROAR replaces the top ceil(t*P) ranked units, KAR replaces all others.
/// Every untouched value is copied bit-for-bit.
Tensor modify_sample(const Tensor& x, const Ranking& ranking, const ModificationSpec& spec);
void modify_sample_in_place(std::span<double> x, const Ranking& ranking,
                            const ModificationSpec& spec);

/// Per-channel train means for pixel granularity, per-feature train means
/// for feature granularity.
std::vector<double> replacement_values(const SplitDataset& data, Granularity granularity);
Granularity default_granularity(const SplitDataset& data);

struct Provenance {
  std::string estimator_id;
  double threshold = 0.0;
  ModificationMode mode = ModificationMode::Roar;
  std::uint64_t seed = 0;
  std::string source_id;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ModifiedDataset {
  SplitDataset data;
  Provenance provenance;
};

/// Importance scores for every train and test sample under one estimator.
struct EstimateSet {
  std::string estimator_id;
  std::uint64_t seed = 0;
  std::vector<Tensor> train;
  std::vector<Tensor> test;
};

/// Rankings for every train and test sample under one estimator.
struct RankingSet {
  std::string estimator_id;
  std::uint64_t seed = 0;
  std::vector<Ranking> train;
  std::vector<Ranking> test;
};

RankingSet rank_estimates(const EstimateSet& estimates, Granularity granularity);
/// One ranking shared by every sample (used by the synthetic task).
RankingSet uniform_ranking(std::string estimator_id, const Ranking& ranking,
                           const SplitDataset& data, std::uint64_t seed = 0);

/// Seeds and settings for computing estimates over a whole dataset.
struct EstimationOptions {
  EstimatorSettings settings;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// Evaluates the estimator on every sample of both splits, targeting the
/// model's predicted class. Sample i of a split uses a private seed derived
/// from (seed, estimator id, split, i).
EstimateSet compute_estimates(const EstimatorSpec& spec, const Model& model,
                              const SplitDataset& data, const EstimationOptions& options);

/// Target unit for estimates: the predicted class, or unit 0 for a
/// single-output model.
OutputTarget predicted_target(const Model& model, const Tensor& x);

struct GridSpec {
  std::vector<double> thresholds;
  std::vector<ModificationMode> modes{ModificationMode::Roar};
};

/// Builds the modified train and test splits for one grid point.
ModifiedDataset make_modified_dataset(const SplitDataset& data, const RankingSet& rankings,
                                      double threshold, ModificationMode mode,
                                      const std::vector<double>& replacement);

/// One dataset per (estimator, threshold, mode), ordered estimator-major.
/// Replacement values come from the unmodified train split.
std::vector<ModifiedDataset> generate_modified_datasets(const SplitDataset& data,
                                                        const std::vector<EstimateSet>& estimates,
                                                        const GridSpec& grid);

struct ResultRecord {
  std::string estimator_id;
  double threshold = 0.0;
  ModificationMode mode = ModificationMode::Roar;
  std::size_t run_index = 0;
  double accuracy = 0.0;

  friend bool operator==(const ResultRecord&, const ResultRecord&) = default;
};

struct CellFailure {
  std::string estimator_id;
  double threshold = 0.0;
  ModificationMode mode = ModificationMode::Roar;
  std::string message;
};

struct CellSummary {
  std::string estimator_id;
  double threshold = 0.0;
  ModificationMode mode = ModificationMode::Roar;
  double mean_accuracy = 0.0;
  /// Sample standard deviation (n - 1); zero for a single run.
  double std_accuracy = 0.0;
  std::size_t runs = 0;
};

/// Accuracy records keyed by (estimator, threshold, mode, run).
class ResultGrid {
 public:
  void add(ResultRecord record);
  void add_failure(CellFailure failure);
  void merge(const ResultGrid& other);

  /// Sorted by (estimator, threshold, mode, run).
  std::vector<ResultRecord> records() const;
  const std::vector<CellFailure>& failures() const { return failures_; }
  std::size_t size() const { return records_.size(); }

  std::vector<CellSummary> aggregate() const;
  /// Mean accuracy of one cell, or nullopt when it has no records.
  std::optional<double> mean(const std::string& estimator_id, double threshold,
                             ModificationMode mode) const;

  /// `estimator,threshold,mode,run,accuracy`
  std::string records_csv() const;
  /// `estimator,threshold,mode,mean_accuracy,std_accuracy`
  std::string aggregate_csv() const;

  static ResultGrid from_records_csv(const std::string& text);

 private:
  std::vector<ResultRecord> records_;
  std::vector<CellFailure> failures_;
};

struct RoarConfig {
  GridSpec grid;
  std::size_t runs_per_point = 5;
  ModelSpec model = MlpSpec{{32}};
  TrainConfig train;
  std::size_t workers = 1;
};

/// Seed for one training run of one grid cell.
std::uint64_t run_seed(std::uint64_t base_seed, const std::string& estimator_id,
                       double threshold, ModificationMode mode, std::size_t run_index);

/// Trains `runs` fresh models on one modified dataset, seeding run r with
/// run_seed(train_config.seed, provenance..., r). TrainingError propagates.
std::vector<ResultRecord> train_cell(const ModifiedDataset& modified, const ModelSpec& model,
                                     const TrainConfig& train_config, std::size_t runs);

/// Trains `runs_per_point` fresh models per grid cell on the modified data
/// and records their test accuracy. A diverging cell is recorded as a
/// failure and the rest of the grid still runs.
ResultGrid run_roar(const SplitDataset& data, const std::vector<RankingSet>& rankings,
                    const RoarConfig& config);

/// Scores each modified test split with the frozen original model (one
/// record per cell, run 0, ROAR removal).
ResultGrid run_deletion_metric(const SplitDataset& data, const Model& original_model,
                               const std::vector<RankingSet>& rankings,
                               const std::vector<double>& thresholds);

/// Runs `count` jobs on up to `workers` threads. Exceptions from jobs are
/// rethrown (the first one) after all threads join.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& job);

std::string format_threshold(double threshold);

}  // namespace roar

#include "roar/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <tuple>

#include <fmt/format.h>
#include <json.hpp>

#include "roar/dataset_io.hpp"
#include "roar/errors.hpp"
#include "roar/persistence.hpp"
#include "roar/rng.hpp"

namespace roar {
namespace fs = std::filesystem;

namespace {

constexpr const char* kCellFormat = "roar-cell v1";

class Progress {
 public:
  explicit Progress(std::ostream* out) : out_(out) {}

  void emit(const nlohmann::ordered_json& record) {
    if (out_ == nullptr) return;
    std::lock_guard lock(mutex_);
    *out_ << record.dump() << '\n';
    out_->flush();
  }

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

std::uint64_t checkpoint_seed(std::uint64_t seed) { return SeedSequence(seed).add("checkpoint").seed(); }
std::uint64_t estimates_seed(std::uint64_t seed) { return SeedSequence(seed).add("estimates").seed(); }

// The dataset every stage works on: generated or loaded, then rounded through
// float32 so in-memory data equals what a persisted copy would hold.
SplitDataset working_dataset(const ExperimentConfig& config) {
  SplitDataset data = load_dataset(config.dataset);
  round_to_float32(data);
  return data;
}

Model train_checkpoint(const ExperimentConfig& config, const SplitDataset& data, Progress& progress) {
  TrainConfig cfg = config.train;
  cfg.seed = checkpoint_seed(config.seed);
  const TrainResult result = train(config.model, data, cfg);
  progress.emit({{"event", "checkpoint"}, {"accuracy", result.accuracy}});
  return result.model;
}

std::string sanitize(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  std::replace(text.begin(), text.end(), '\r', ' ');
  return text;
}

std::string estimates_manifest_name(const std::string& id) { return id + ".manifest"; }

// Loads persisted estimates for every configured estimator, computing (and
// persisting) whichever are missing. The checkpoint is trained lazily, only
// when a model-based estimator needs it.
std::vector<EstimateSet> ensure_estimates(const ExperimentConfig& config, const SplitDataset& data,
                                          Progress& progress, std::size_t& training_runs) {
  const fs::path dir = fs::path(config.output) / "estimates";
  fs::create_directories(dir);
  std::optional<Model> checkpoint;
  std::vector<EstimateSet> out;
  for (const std::string& id : config.estimators) {
    if (fs::exists(dir / estimates_manifest_name(id))) {
      out.push_back(load_estimates(id, dir));
      continue;
    }
    const EstimatorSpec spec = EstimatorSpec::parse(id);
    if (spec.uses_model() && !checkpoint) {
      checkpoint = train_checkpoint(config, data, progress);
      ++training_runs;
    }
    // Model-free controls ignore the model; pass a placeholder of the right width.
    Rng unused(0);
    const Model model = checkpoint ? *checkpoint : Model::mlp(data.feature_dim(), {}, 1, unused);
    EstimationOptions opts{estimator_settings(config, id, data), estimates_seed(config.seed), config.workers};
    EstimateSet set = compute_estimates(spec, model, data, opts);
    save_estimates(set, data.sample_shape(), dir);
    progress.emit({{"event", "estimates"}, {"estimator", id}});
    out.push_back(std::move(set));
  }
  return out;
}

struct CellPlan {
  std::size_t estimator = 0;
  double threshold = 0.0;
  ModificationMode mode = ModificationMode::Roar;
  std::string name;
};

std::vector<CellPlan> plan_cells(const ExperimentConfig& config) {
  std::vector<CellPlan> cells;
  for (std::size_t e = 0; e < config.estimators.size(); ++e) {
    for (double t : config.thresholds) {
      for (ModificationMode mode : config.modes) {
        cells.push_back({e, t, mode, cell_name(config.estimators[e], mode, t)});
      }
    }
  }
  return cells;
}

// Normalizes fields that do not influence results before comparing configs.
ExperimentConfig result_relevant(ExperimentConfig config) {
  config.output.clear();
  config.workers = 1;
  return config;
}

void check_config_echo(const ExperimentConfig& config) {
  const fs::path path = fs::path(config.output) / "config.ini";
  if (fs::exists(path)) {
    ExperimentConfig previous;
    try {
      previous = parse_config(read_file(path));
    } catch (const Error& e) {
      throw IntegrityError(fmt::format("{}: unreadable config echo: {}", path.string(), e.what()), "config.ini");
    }
    if (result_relevant(previous) != result_relevant(config)) {
      throw IntegrityError(
          fmt::format("{}: results directory was produced by a different configuration", path.string()),
          "config.ini");
    }
  }
  atomic_write(path, serialize_config(config));
}

struct CellRecord {
  std::string status;
  std::vector<ResultRecord> records;
  std::string message;
};

// Reads a cell manifest and its records. nullopt when the cell has not
// finished; IntegrityError when anything is inconsistent.
std::optional<CellRecord> read_cell(const fs::path& dir) {
  const std::string cell = dir.filename().string();
  const fs::path manifest_path = dir / "cell.txt";
  if (!fs::exists(manifest_path)) return std::nullopt;
  try {
    const Manifest m = Manifest::parse(read_file(manifest_path), kCellFormat);
    CellRecord out;
    out.status = m.get("status");
    const std::string estimator = m.get("estimator");
    const ModificationMode mode = parse_mode(m.get("mode"));
    const std::string threshold_text = m.get("threshold");
    if (cell_name(estimator, mode, std::stod(threshold_text)) != cell) {
      throw IntegrityError("manifest does not describe this cell", cell);
    }
    if (out.status == "failed") {
      out.message = m.get("message");
      return out;
    }
    if (out.status != "complete") throw IntegrityError(fmt::format("unknown status '{}'", out.status), cell);
    const std::string csv = read_file(dir / "records.csv");
    if (fmt::format("{:016x}", fnv1a64(csv)) != m.get("records_checksum")) {
      throw IntegrityError("records.csv checksum mismatch", cell);
    }
    out.records = ResultGrid::from_records_csv(csv).records();
    if (std::to_string(out.records.size()) != m.get("runs")) {
      throw IntegrityError("record count does not match manifest", cell);
    }
    for (const ResultRecord& r : out.records) {
      if (r.estimator_id != estimator || r.mode != mode || format_threshold(r.threshold) != threshold_text) {
        throw IntegrityError("record does not belong to this cell", cell);
      }
    }
    return out;
  } catch (const IntegrityError& e) {
    throw IntegrityError(fmt::format("cell '{}': {}", cell, e.what()), cell);
  } catch (const std::exception& e) {
    throw IntegrityError(fmt::format("cell '{}': corrupt manifest: {}", cell, e.what()), cell);
  }
}

void write_cell(const fs::path& dir, const CellPlan& plan, const std::string& estimator,
                const std::vector<ResultRecord>* records, const std::string& failure) {
  Manifest m(kCellFormat);
  m.set("estimator", estimator);
  m.set("threshold", format_threshold(plan.threshold));
  m.set("mode", mode_name(plan.mode));
  if (records != nullptr) {
    ResultGrid grid;
    for (const ResultRecord& r : *records) grid.add(r);
    const std::string csv = grid.records_csv();
    atomic_write(dir / "records.csv", csv);
    m.set("status", "complete");
    m.set("runs", std::to_string(records->size()));
    m.set("records_checksum", fmt::format("{:016x}", fnv1a64(csv)));
  } else {
    m.set("status", "failed");
    m.set("message", sanitize(failure));
  }
  atomic_write(dir / "cell.txt", m.str());
}

std::string plot_wide_csv(const std::vector<CellSummary>& rows, ModificationMode mode,
                          const std::vector<std::string>& estimators) {
  std::vector<double> thresholds;
  for (const CellSummary& r : rows) {
    if (r.mode == mode) thresholds.push_back(r.threshold);
  }
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::string out = "threshold";
  for (const std::string& e : estimators) out += "," + e;
  out += "\n";
  for (double t : thresholds) {
    out += format_threshold(t);
    for (const std::string& e : estimators) {
      out += ",";
      for (const CellSummary& r : rows) {
        if (r.mode == mode && r.threshold == t && r.estimator_id == e) out += fmt::format("{}", r.mean_accuracy);
      }
    }
    out += "\n";
  }
  return out;
}

std::string kar_vs_roar_csv(const std::vector<CellSummary>& rows) {
  std::string out = "estimator,threshold,roar_mean,roar_std,kar_mean,kar_std\n";
  auto find = [&](const std::string& e, double t, ModificationMode m) -> const CellSummary* {
    for (const CellSummary& r : rows) {
      if (r.estimator_id == e && r.threshold == t && r.mode == m) return &r;
    }
    return nullptr;
  };
  auto cols = [](const CellSummary* s) {
    return s != nullptr ? fmt::format("{},{}", s->mean_accuracy, s->std_accuracy) : std::string(",");
  };
  std::vector<std::pair<std::string, double>> keys;
  for (const CellSummary& r : rows) keys.emplace_back(r.estimator_id, r.threshold);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  for (const auto& [e, t] : keys) {
    out += fmt::format("{},{},{},{}\n", e, format_threshold(t), cols(find(e, t, ModificationMode::Roar)),
                       cols(find(e, t, ModificationMode::Kar)));
  }
  return out;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

SplitDataset load_dataset(const DatasetSpec& spec) {
  switch (spec.kind) {
    case DatasetKind::Toy:
      return generate_toy(spec.toy).data;
    case DatasetKind::SyntheticImage:
      return generate_bars(spec.bars);
    case DatasetKind::Idx:
      return load_idx_dataset(spec.train_images, spec.train_labels, spec.test_images, spec.test_labels);
  }
  throw ConfigError("dataset.kind: unsupported", "dataset.kind");
}

EstimatorSettings estimator_settings(const ExperimentConfig& config, const std::string& estimator_id,
                                     const SplitDataset& data) {
  const EstimatorOptions o = config.options_for(estimator_id);
  const auto values = data.train.features.data();
  double range = 0.0;
  if (!values.empty()) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    range = *hi - *lo;
  }
  EstimatorSettings s;
  s.ensemble_samples = o.samples;
  s.noise_stddev = o.noise_fraction * range;
  s.ig.steps = o.ig_steps;
  return s;
}

std::string cell_name(const std::string& estimator_id, ModificationMode mode, double threshold) {
  return fmt::format("{}__{}__t{}", estimator_id, mode_name(mode), format_threshold(threshold));
}

RunSummary cmd_run(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Progress progress(options.progress);
  const fs::path root(config.output);
  fs::create_directories(root / "cells");
  check_config_echo(config);

  const std::vector<CellPlan> cells = plan_cells(config);
  RunSummary summary;
  summary.cells_total = cells.size();

  std::vector<const CellPlan*> pending;
  for (const CellPlan& cell : cells) {
    if (read_cell(root / "cells" / cell.name)) {
      ++summary.cells_skipped;
    } else {
      pending.push_back(&cell);
    }
  }
  const bool interrupted = options.max_cells && *options.max_cells < pending.size();
  if (interrupted) pending.resize(*options.max_cells);

  if (!pending.empty()) {
    const SplitDataset data = working_dataset(config);
    const std::vector<EstimateSet> estimates = ensure_estimates(config, data, progress, summary.training_runs);
    const Granularity granularity = default_granularity(data);
    std::vector<RankingSet> rankings;
    for (const EstimateSet& set : estimates) rankings.push_back(rank_estimates(set, granularity));
    const std::vector<double> replacement = replacement_values(data, granularity);

    TrainConfig train_base = config.train;
    train_base.seed = config.seed;
    std::vector<std::size_t> trained(pending.size(), 0);
    std::vector<bool> failed(pending.size(), false);
    parallel_for(pending.size(), config.workers, [&](std::size_t p) {
      const CellPlan& cell = *pending[p];
      const std::string& id = config.estimators[cell.estimator];
      const fs::path dir = root / "cells" / cell.name;
      fs::create_directories(dir);
      save_modified_dataset(
          make_modified_dataset(data, rankings[cell.estimator], cell.threshold, cell.mode, replacement),
          dir / "data");
      // Train on the persisted copy so a resumed run sees identical inputs.
      const ModifiedDataset modified = load_modified_dataset(dir / "data");
      try {
        const std::vector<ResultRecord> records =
            train_cell(modified, config.model, train_base, config.runs_per_point);
        trained[p] = records.size();
        write_cell(dir, cell, id, &records, {});
        double mean = 0.0;
        for (const ResultRecord& r : records) mean += r.accuracy / static_cast<double>(records.size());
        progress.emit({{"event", "cell"}, {"cell", cell.name}, {"status", "complete"}, {"mean_accuracy", mean}});
      } catch (const TrainingError& e) {
        failed[p] = true;
        write_cell(dir, cell, id, nullptr, e.what());
        progress.emit({{"event", "cell"}, {"cell", cell.name}, {"status", "failed"}, {"message", e.what()}});
      }
    });
    for (std::size_t p = 0; p < pending.size(); ++p) {
      summary.training_runs += trained[p];
      summary.cells_failed += failed[p] ? 1 : 0;
    }
    summary.cells_processed = pending.size();
  }

  summary.complete = !interrupted;
  if (summary.complete) cmd_report(root);
  progress.emit({{"event", "run"},
                 {"cells", summary.cells_total},
                 {"skipped", summary.cells_skipped},
                 {"processed", summary.cells_processed},
                 {"failed", summary.cells_failed},
                 {"training_runs", summary.training_runs},
                 {"complete", summary.complete}});
  return summary;
}

ReportSummary cmd_report(const fs::path& results_dir) {
  const fs::path cells_dir = results_dir / "cells";
  if (!fs::is_directory(cells_dir)) {
    throw Error(fmt::format("{}: no cells directory", results_dir.string()));
  }
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(cells_dir)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());

  ReportSummary summary;
  ResultGrid grid;
  std::vector<std::string> estimators;
  for (const fs::path& dir : dirs) {
    const std::optional<CellRecord> cell = read_cell(dir);
    if (!cell) {
      ++summary.incomplete;
      continue;
    }
    ++summary.cells;
    const Manifest m = Manifest::parse(read_file(dir / "cell.txt"), kCellFormat);
    const std::string estimator = m.get("estimator");
    if (std::find(estimators.begin(), estimators.end(), estimator) == estimators.end()) {
      estimators.push_back(estimator);
    }
    if (cell->status == "failed") {
      grid.add_failure({estimator, std::stod(m.get("threshold")), parse_mode(m.get("mode")), cell->message});
      continue;
    }
    for (const ResultRecord& r : cell->records) grid.add(r);
  }
  std::sort(estimators.begin(), estimators.end());

  const std::vector<CellSummary> rows = grid.aggregate();
  atomic_write(results_dir / "records.csv", grid.records_csv());
  atomic_write(results_dir / "aggregate.csv", grid.aggregate_csv());

  std::vector<CellFailure> failures = grid.failures();
  std::sort(failures.begin(), failures.end(), [](const CellFailure& a, const CellFailure& b) {
    return std::tie(a.estimator_id, a.threshold, a.mode) < std::tie(b.estimator_id, b.threshold, b.mode);
  });
  std::string failures_csv = "estimator,threshold,mode,message\n";
  for (const CellFailure& f : failures) {
    failures_csv += fmt::format("{},{},{},{}\n", f.estimator_id, format_threshold(f.threshold), mode_name(f.mode),
                                csv_field(f.message));
  }
  atomic_write(results_dir / "failures.csv", failures_csv);

  fs::create_directories(results_dir / "plots");
  for (ModificationMode mode : {ModificationMode::Roar, ModificationMode::Kar}) {
    atomic_write(results_dir / "plots" / fmt::format("accuracy_vs_threshold_{}.csv", mode_name(mode)),
                 plot_wide_csv(rows, mode, estimators));
  }
  atomic_write(results_dir / "plots" / "kar_vs_roar.csv", kar_vs_roar_csv(rows));

  summary.failures = failures.size();
  summary.records = grid.size();
  summary.aggregate_rows = rows.size();
  return summary;
}

std::size_t cmd_estimate(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Progress progress(options.progress);
  const SplitDataset data = working_dataset(config);
  std::size_t training_runs = 0;
  return ensure_estimates(config, data, progress, training_runs).size();
}

std::size_t cmd_modify(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Progress progress(options.progress);
  const fs::path root(config.output);
  const SplitDataset data = working_dataset(config);
  const Granularity granularity = default_granularity(data);
  const std::vector<double> replacement = replacement_values(data, granularity);
  std::size_t written = 0;
  for (const std::string& id : config.estimators) {
    if (!fs::exists(root / "estimates" / estimates_manifest_name(id))) {
      throw Error(fmt::format("no estimates for '{}' under {}; run the estimate stage first", id,
                              (root / "estimates").string()));
    }
    const RankingSet rankings = rank_estimates(load_estimates(id, root / "estimates"), granularity);
    for (double t : config.thresholds) {
      for (ModificationMode mode : config.modes) {
        const std::string name = cell_name(id, mode, t);
        save_modified_dataset(make_modified_dataset(data, rankings, t, mode, replacement),
                              root / "datasets" / name);
        progress.emit({{"event", "dataset"}, {"cell", name}});
        ++written;
      }
    }
  }
  return written;
}

ResultGrid cmd_deletion_metric(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Progress progress(options.progress);
  const SplitDataset data = working_dataset(config);
  std::size_t training_runs = 0;
  const std::vector<EstimateSet> estimates = ensure_estimates(config, data, progress, training_runs);
  const Model model = train_checkpoint(config, data, progress);
  const Granularity granularity = default_granularity(data);
  std::vector<RankingSet> rankings;
  for (const EstimateSet& set : estimates) rankings.push_back(rank_estimates(set, granularity));
  ResultGrid grid = run_deletion_metric(data, model, rankings, config.thresholds);
  fs::create_directories(config.output);
  atomic_write(fs::path(config.output) / "deletion.csv", grid.records_csv());
  return grid;
}

bool ToyValidateReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const ToyCheck& c) { return c.passed; });
}

std::optional<double> ToyValidateReport::accuracy(const std::string& metric, ToyRanking ranking,
                                                  double threshold) const {
  for (const ToyPoint& p : points) {
    if (p.metric == metric && p.ranking == ranking && p.threshold == threshold) return p.accuracy;
  }
  return std::nullopt;
}

std::string ToyValidateReport::csv() const {
  std::string out = "metric,ranking,threshold,accuracy\n";
  for (const ToyPoint& p : points) {
    out += fmt::format("{},{},{},{}\n", p.metric, toy_ranking_name(p.ranking), format_threshold(p.threshold),
                       p.accuracy);
  }
  return out;
}

ToyValidateReport toy_validate(const ToyConfig& base, const ToyValidateOptions& options) {
  if (options.replicates == 0) throw Error("toy_validate: replicates must be at least 1");
  const auto start = std::chrono::steady_clock::now();
  constexpr ToyRanking kRankings[] = {ToyRanking::GroundTruth, ToyRanking::Inverted, ToyRanking::Random};

  // sums[metric][ranking][threshold]
  std::vector<std::vector<std::vector<double>>> partial(
      options.replicates, std::vector<std::vector<double>>(6, std::vector<double>(options.thresholds.size())));
  parallel_for(options.replicates, options.workers, [&](std::size_t r) {
    ToyConfig cfg = base;
    cfg.seed = SeedSequence(base.seed).add("replicate").add(r).seed();
    const ToyDataset toy = generate_toy(cfg);
    const LeastSquaresSpec ls{options.ridge};
    const Model original = train(ModelSpec{ls}, toy.data, TrainConfig{}).model;

    std::vector<RankingSet> sets;
    for (ToyRanking variant : kRankings) {
      const Ranking ranking = ground_truth_ranking(toy, variant, SeedSequence(cfg.seed).add("random-ranking").seed());
      sets.push_back(uniform_ranking(toy_ranking_name(variant), ranking, toy.data, cfg.seed));
    }
    RoarConfig roar;
    roar.grid = {options.thresholds, {ModificationMode::Roar}};
    roar.runs_per_point = 1;
    roar.model = ls;
    const ResultGrid retrained = run_roar(toy.data, sets, roar);
    const ResultGrid deletion = run_deletion_metric(toy.data, original, sets, options.thresholds);
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t i = 0; i < options.thresholds.size(); ++i) {
        const double t = options.thresholds[i];
        const std::string id = toy_ranking_name(kRankings[k]);
        partial[r][k][i] = retrained.mean(id, t, ModificationMode::Roar).value();
        partial[r][3 + k][i] = deletion.mean(id, t, ModificationMode::Roar).value();
      }
    }
  });

  ToyValidateReport report;
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t i = 0; i < options.thresholds.size(); ++i) {
        double sum = 0.0;
        for (std::size_t r = 0; r < options.replicates; ++r) sum += partial[r][3 * m + k][i];
        report.points.push_back({m == 0 ? "roar" : "deletion", kRankings[k], options.thresholds[i],
                                 sum / static_cast<double>(options.replicates)});
      }
    }
  }

  auto acc = [&](const char* metric, ToyRanking ranking, double t) { return report.accuracy(metric, ranking, t); };
  const std::optional<double> roar0 = acc("roar", ToyRanking::Inverted, 0.0);
  const std::optional<double> del0 = acc("deletion", ToyRanking::Inverted, 0.0);
  {
    ToyCheck c{"inverted-roar-flat", roar0.has_value(), {}};
    for (double t : options.thresholds) {
      if (t > 0.70 || !roar0) continue;
      const double gap = std::abs(*acc("roar", ToyRanking::Inverted, t) - *roar0);
      c.detail += fmt::format("{}t={} |diff|={:.4f}", c.detail.empty() ? "" : "; ", format_threshold(t), gap);
      if (!(gap <= 0.02)) c.passed = false;
    }
    report.checks.push_back(c);
  }
  {
    const std::optional<double> half = acc("deletion", ToyRanking::Inverted, 0.5);
    ToyCheck c{"inverted-deletion-drops", del0 && half && *del0 - *half >= 0.10, {}};
    if (del0 && half) c.detail = fmt::format("t=0 {:.4f}, t=0.5 {:.4f}, drop {:.4f}", *del0, *half, *del0 - *half);
    report.checks.push_back(c);
  }
  {
    ToyCheck c{"ground-truth-roar-chance", true, {}};
    bool any = false;
    for (double t : options.thresholds) {
      if (t < 0.25) continue;
      any = true;
      const double gap = std::abs(*acc("roar", ToyRanking::GroundTruth, t) - 0.5);
      c.detail += fmt::format("{}t={} |acc-0.5|={:.4f}", c.detail.empty() ? "" : "; ", format_threshold(t), gap);
      if (!(gap <= 0.03)) c.passed = false;
    }
    c.passed = c.passed && any;
    report.checks.push_back(c);
  }
  {
    ToyCheck c{"deletion-equals-roar-at-zero", true, {}};
    for (ToyRanking k : kRankings) {
      const auto a = acc("roar", k, 0.0);
      const auto b = acc("deletion", k, 0.0);
      if (!a || !b || *a != *b) c.passed = false;
    }
    c.detail = c.passed ? "identical" : "differ";
    report.checks.push_back(c);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.checks.push_back({"runtime", report.seconds < 60.0, fmt::format("{:.2f}s", report.seconds)});
  return report;
}

}  // namespace roar

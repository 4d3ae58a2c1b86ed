#include "roar/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include <fmt/format.h>

#include "roar/dataset_io.hpp"
#include "roar/errors.hpp"
#include "roar/rng.hpp"

namespace roar {
namespace {

auto record_key(const ResultRecord& r) {
  return std::tie(r.estimator_id, r.threshold, r.mode, r.run_index);
}

void check_threshold(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(fmt::format("threshold {} is outside [0, 1]", t));
}

double parse_double(std::string_view text, std::size_t line) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError(fmt::format("line {}: '{}' is not a number", line, text));
  }
  return value;
}

}  // namespace

Ranking rank_scores(std::span<const double> scores) {
  Ranking ranking;
  ranking.order.resize(scores.size());
  std::iota(ranking.order.begin(), ranking.order.end(), std::size_t{0});
  std::stable_sort(ranking.order.begin(), ranking.order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return ranking;
}

Ranking rank_features(const ImportanceEstimate& estimate, Granularity granularity) {
  const Tensor& scores = estimate.scores;
  if (granularity == Granularity::Feature) return rank_scores(scores.data());
  if (scores.rank() != 3) {
    throw MetadataError(fmt::format("pixel ranking needs an (H, W, C) estimate, got {}",
                                    shape_string(scores.shape())));
  }
  const std::size_t channels = scores.dim(2);
  const std::size_t pixels = scores.dim(0) * scores.dim(1);
  std::vector<double> summed(pixels, 0.0);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < channels; ++c) summed[p] += scores[p * channels + c];
  }
  return rank_scores(summed);
}

const char* mode_name(ModificationMode mode) {
  return mode == ModificationMode::Roar ? "roar" : "kar";
}

ModificationMode parse_mode(const std::string& name) {
  if (name == "roar") return ModificationMode::Roar;
  if (name == "kar") return ModificationMode::Kar;
  throw Error(fmt::format("unknown modification mode '{}'", name));
}

std::size_t top_count(double threshold, std::size_t units) {
  check_threshold(threshold);
  const double product = threshold * static_cast<double>(units);
  const double nearest = std::round(product);
  const double count = std::abs(product - nearest) < 1e-9 ? nearest : std::ceil(product);
  return std::min(units, static_cast<std::size_t>(count));
}

void modify_sample_in_place(std::span<double> x, const Ranking& ranking,
                            const ModificationSpec& spec) {
  const std::size_t units = ranking.size();
  if (units == 0 || x.size() % units != 0) {
    throw LengthError(fmt::format("ranking of {} units does not divide a sample of {} values",
                                  units, x.size()),
                      units, x.size());
  }
  const std::size_t channels = x.size() / units;
  const bool per_channel = spec.replacement.size() == channels;
  if (!per_channel && spec.replacement.size() != x.size()) {
    throw LengthError(fmt::format("replacement has {} values; expected {} (per channel) or {} "
                                  "(per feature)",
                                  spec.replacement.size(), channels, x.size()),
                      channels, spec.replacement.size());
  }
  const std::size_t k = top_count(spec.threshold, units);
  const std::size_t begin = spec.mode == ModificationMode::Roar ? 0 : k;
  const std::size_t end = spec.mode == ModificationMode::Roar ? k : units;
  for (std::size_t r = begin; r < end; ++r) {
    const std::size_t unit = ranking.order[r];
    if (unit >= units) throw Error(fmt::format("ranking entry {} is out of range", unit));
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = unit * channels + c;
      x[i] = per_channel ? spec.replacement[c] : spec.replacement[i];
    }
  }
}

Tensor modify_sample(const Tensor& x, const Ranking& ranking, const ModificationSpec& spec) {
  Tensor out = x;
  modify_sample_in_place(out.data(), ranking, spec);
  return out;
}

Granularity default_granularity(const SplitDataset& data) {
  return data.image ? Granularity::Pixel : Granularity::Feature;
}

std::vector<double> replacement_values(const SplitDataset& data, Granularity granularity) {
  if (granularity == Granularity::Pixel) return channel_means(data);
  return feature_means(data.train);
}

RankingSet rank_estimates(const EstimateSet& estimates, Granularity granularity) {
  RankingSet out{estimates.estimator_id, estimates.seed, {}, {}};
  for (const auto& [src, dst] : {std::pair{&estimates.train, &out.train},
                                 std::pair{&estimates.test, &out.test}}) {
    dst->reserve(src->size());
    for (const Tensor& scores : *src) {
      dst->push_back(rank_features({scores, estimates.estimator_id}, granularity));
    }
  }
  return out;
}

RankingSet uniform_ranking(std::string estimator_id, const Ranking& ranking,
                           const SplitDataset& data, std::uint64_t seed) {
  return {std::move(estimator_id), seed, std::vector<Ranking>(data.train.size(), ranking),
          std::vector<Ranking>(data.test.size(), ranking)};
}

OutputTarget predicted_target(const Model& model, const Tensor& x) {
  if (model.output_dim() == 1) return {0};
  const Tensor out = forward(model, x);
  const auto values = out.data();
  return {static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin())};
}

EstimateSet compute_estimates(const EstimatorSpec& spec, const Model& model,
                              const SplitDataset& data, const EstimationOptions& options) {
  const std::string id = spec.id();
  EstimateSet out{id, options.seed, {}, {}};
  const Shape sample_shape = data.sample_shape();
  const std::size_t n_train = data.train.size();
  out.train.resize(n_train);
  out.test.resize(data.test.size());

  parallel_for(n_train + data.test.size(), options.workers, [&](std::size_t job) {
    const bool is_train = job < n_train;
    const std::size_t i = is_train ? job : job - n_train;
    const Dataset& split = is_train ? data.train : data.test;
    auto row = split.features.row(i);
    const Tensor x(sample_shape, std::vector<double>(row.begin(), row.end()));
    const OutputTarget target = spec.uses_model() ? predicted_target(model, x) : OutputTarget{0};
    const std::uint64_t seed =
        SeedSequence(options.seed).add(id).add(std::uint64_t{is_train ? 0U : 1U}).add(i).seed();
    ImportanceEstimate e =
        compute_estimate(spec, model, x, target, options.settings, data.image, seed);
    (is_train ? out.train : out.test)[i] = std::move(e.scores);
  });
  return out;
}

ModifiedDataset make_modified_dataset(const SplitDataset& data, const RankingSet& rankings,
                                      double threshold, ModificationMode mode,
                                      const std::vector<double>& replacement) {
  check_threshold(threshold);
  for (const auto& [split, ranks, name] :
       {std::tuple{&data.train, &rankings.train, "train"},
        std::tuple{&data.test, &rankings.test, "test"}}) {
    if (ranks->size() < split->size()) {
      throw ProvenanceError(fmt::format("estimator '{}': no estimate for {} sample {}",
                                        rankings.estimator_id, name, ranks->size()));
    }
    if (ranks->size() > split->size()) {
      throw ProvenanceError(fmt::format("estimator '{}': {} estimates for {} {} samples",
                                        rankings.estimator_id, ranks->size(), split->size(),
                                        name));
    }
  }
  ModifiedDataset out{data, {rankings.estimator_id, threshold, mode, rankings.seed, data.source_id}};
  const ModificationSpec spec{threshold, mode, replacement};
  for (std::size_t i = 0; i < out.data.train.size(); ++i) {
    modify_sample_in_place(out.data.train.features.row(i), rankings.train[i], spec);
  }
  for (std::size_t i = 0; i < out.data.test.size(); ++i) {
    modify_sample_in_place(out.data.test.features.row(i), rankings.test[i], spec);
  }
  return out;
}

std::vector<ModifiedDataset> generate_modified_datasets(const SplitDataset& data,
                                                        const std::vector<EstimateSet>& estimates,
                                                        const GridSpec& grid) {
  const Granularity granularity = default_granularity(data);
  const std::vector<double> replacement = replacement_values(data, granularity);
  std::vector<ModifiedDataset> out;
  for (const EstimateSet& set : estimates) {
    const RankingSet rankings = rank_estimates(set, granularity);
    for (double t : grid.thresholds) {
      for (ModificationMode mode : grid.modes) {
        out.push_back(make_modified_dataset(data, rankings, t, mode, replacement));
      }
    }
  }
  return out;
}

void ResultGrid::add(ResultRecord record) {
  if (!(record.accuracy >= 0.0 && record.accuracy <= 1.0)) {
    throw Error(fmt::format("accuracy {} is outside [0, 1]", record.accuracy));
  }
  records_.push_back(std::move(record));
}

void ResultGrid::add_failure(CellFailure failure) { failures_.push_back(std::move(failure)); }

void ResultGrid::merge(const ResultGrid& other) {
  records_.insert(records_.end(), other.records_.begin(), other.records_.end());
  failures_.insert(failures_.end(), other.failures_.begin(), other.failures_.end());
}

std::vector<ResultRecord> ResultGrid::records() const {
  std::vector<ResultRecord> sorted = records_;
  std::sort(sorted.begin(), sorted.end(),
            [](const ResultRecord& a, const ResultRecord& b) { return record_key(a) < record_key(b); });
  return sorted;
}

std::vector<CellSummary> ResultGrid::aggregate() const {
  const auto sorted = records();
  std::vector<CellSummary> cells;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    double sum = 0.0;
    while (j < sorted.size() && sorted[j].estimator_id == sorted[i].estimator_id &&
           sorted[j].threshold == sorted[i].threshold && sorted[j].mode == sorted[i].mode) {
      sum += sorted[j].accuracy;
      ++j;
    }
    const std::size_t n = j - i;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t k = i; k < j; ++k) ss += (sorted[k].accuracy - mean) * (sorted[k].accuracy - mean);
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    cells.push_back({sorted[i].estimator_id, sorted[i].threshold, sorted[i].mode, mean, sd, n});
    i = j;
  }
  return cells;
}

std::optional<double> ResultGrid::mean(const std::string& estimator_id, double threshold,
                                       ModificationMode mode) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const ResultRecord& r : records_) {
    if (r.estimator_id == estimator_id && r.threshold == threshold && r.mode == mode) {
      sum += r.accuracy;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string format_threshold(double threshold) { return fmt::format("{}", threshold); }

std::string ResultGrid::records_csv() const {
  std::string out = "estimator,threshold,mode,run,accuracy\n";
  for (const ResultRecord& r : records()) {
    out += fmt::format("{},{},{},{},{}\n", r.estimator_id, format_threshold(r.threshold),
                       mode_name(r.mode), r.run_index, r.accuracy);
  }
  return out;
}

std::string ResultGrid::aggregate_csv() const {
  std::string out = "estimator,threshold,mode,mean_accuracy,std_accuracy\n";
  for (const CellSummary& c : aggregate()) {
    out += fmt::format("{},{},{},{},{}\n", c.estimator_id, format_threshold(c.threshold),
                       mode_name(c.mode), c.mean_accuracy, c.std_accuracy);
  }
  return out;
}

ResultGrid ResultGrid::from_records_csv(const std::string& text) {
  ResultGrid grid;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "estimator,threshold,mode,run,accuracy") {
        throw FormatError("records CSV: unexpected header '" + line + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      throw FormatError(fmt::format("records CSV line {}: expected 5 fields", line_no));
    }
    ResultRecord r;
    r.estimator_id = fields[0];
    r.threshold = parse_double(fields[1], line_no);
    r.mode = parse_mode(fields[2]);
    r.run_index = static_cast<std::size_t>(parse_double(fields[3], line_no));
    r.accuracy = parse_double(fields[4], line_no);
    grid.add(std::move(r));
  }
  return grid;
}

std::uint64_t run_seed(std::uint64_t base_seed, const std::string& estimator_id,
                       double threshold, ModificationMode mode, std::size_t run_index) {
  return SeedSequence(base_seed)
      .add(estimator_id)
      .add(threshold)
      .add(static_cast<std::uint64_t>(mode))
      .add(run_index)
      .seed();
}

std::vector<ResultRecord> train_cell(const ModifiedDataset& modified, const ModelSpec& model,
                                     const TrainConfig& train_config, std::size_t runs) {
  const Provenance& p = modified.provenance;
  std::vector<ResultRecord> out;
  out.reserve(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    TrainConfig cfg = train_config;
    cfg.seed = run_seed(train_config.seed, p.estimator_id, p.threshold, p.mode, r);
    const TrainResult result = train(model, modified.data, cfg);
    out.push_back({p.estimator_id, p.threshold, p.mode, r, result.accuracy});
  }
  return out;
}

ResultGrid run_roar(const SplitDataset& data, const std::vector<RankingSet>& rankings,
                    const RoarConfig& config) {
  if (config.runs_per_point == 0) throw Error("run_roar: runs_per_point must be at least 1");
  struct Cell {
    const RankingSet* rankings;
    double threshold;
    ModificationMode mode;
  };
  std::vector<Cell> cells;
  for (const RankingSet& set : rankings) {
    for (double t : config.grid.thresholds) {
      for (ModificationMode mode : config.grid.modes) cells.push_back({&set, t, mode});
    }
  }
  const std::vector<double> replacement = replacement_values(data, default_granularity(data));

  std::vector<ResultGrid> partial(cells.size());
  parallel_for(cells.size(), config.workers, [&](std::size_t c) {
    const Cell& cell = cells[c];
    const ModifiedDataset modified =
        make_modified_dataset(data, *cell.rankings, cell.threshold, cell.mode, replacement);
    ResultGrid local;
    try {
      for (ResultRecord& r : train_cell(modified, config.model, config.train, config.runs_per_point)) {
        local.add(std::move(r));
      }
    } catch (const TrainingError& e) {
      local = ResultGrid();
      local.add_failure({cell.rankings->estimator_id, cell.threshold, cell.mode, e.what()});
    }
    partial[c] = std::move(local);
  });

  ResultGrid grid;
  for (const ResultGrid& g : partial) grid.merge(g);
  return grid;
}

ResultGrid run_deletion_metric(const SplitDataset& data, const Model& original_model,
                               const std::vector<RankingSet>& rankings,
                               const std::vector<double>& thresholds) {
  if (original_model.input_dim() != data.feature_dim()) {
    throw DimensionError(fmt::format("deletion metric: model expects {} features, data has {}",
                                     original_model.input_dim(), data.feature_dim()),
                         0);
  }
  const std::vector<double> replacement = replacement_values(data, default_granularity(data));
  ResultGrid grid;
  for (const RankingSet& set : rankings) {
    if (set.test.size() != data.test.size()) {
      throw ProvenanceError(fmt::format("estimator '{}': {} test rankings for {} test samples",
                                        set.estimator_id, set.test.size(), data.test.size()));
    }
    for (double t : thresholds) {
      const ModificationSpec spec{t, ModificationMode::Roar, replacement};
      Dataset test = data.test;
      for (std::size_t i = 0; i < test.size(); ++i) {
        modify_sample_in_place(test.features.row(i), set.test[i], spec);
      }
      grid.add({set.estimator_id, t, ModificationMode::Roar, 0, accuracy(original_model, test)});
    }
  }
  return grid;
}

void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& job) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace roar

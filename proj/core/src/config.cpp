#include "roar/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "roar/errors.hpp"
#include "roar/estimators.hpp"

namespace roar {
namespace {

struct Entry {
  std::string value;
  std::size_t line = 0;
};

// section -> key -> entry, in file order of sections.
struct RawConfig {
  std::vector<std::pair<std::string, std::size_t>> sections;
  std::map<std::string, std::map<std::string, Entry>> entries;
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

RawConfig tokenize(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::string section;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    if (content.front() == '[') {
      if (content.back() != ']') {
        throw ConfigError(fmt::format("line {}: malformed section header", line_no), {}, line_no);
      }
      section = trim(std::string_view(content).substr(1, content.size() - 2));
      // Collapse inner whitespace so "[estimator  sg-grad]" == "[estimator sg-grad]".
      std::istringstream words(section);
      std::vector<std::string> parts{std::istream_iterator<std::string>(words), {}};
      section = fmt::format("{}", fmt::join(parts, " "));
      if (raw.entries.count(section)) {
        throw ConfigError(fmt::format("line {}: duplicate section [{}]", line_no, section), section, line_no);
      }
      raw.sections.emplace_back(section, line_no);
      raw.entries[section];
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no), {}, line_no);
    }
    const std::string key = trim(std::string_view(content).substr(0, eq));
    if (section.empty()) {
      throw ConfigError(fmt::format("line {}: key '{}' outside any section", line_no, key), key, line_no);
    }
    auto& bucket = raw.entries[section];
    if (bucket.count(key)) {
      throw ConfigError(fmt::format("line {}: duplicate key '{}.{}'", line_no, section, key),
                        section + "." + key, line_no);
    }
    bucket[key] = {trim(std::string_view(content).substr(eq + 1)), line_no};
  }
  return raw;
}

[[noreturn]] void bad_value(const std::string& key, const Entry& e, const std::string& why) {
  throw ConfigError(fmt::format("line {}: {} = '{}': {}", e.line, key, e.value, why), key, e.line);
}

std::uint64_t to_u64(const std::string& key, const Entry& e) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (e.value.empty() || ec != std::errc() || ptr != e.value.data() + e.value.size()) {
    bad_value(key, e, "expected a non-negative integer");
  }
  return v;
}

std::size_t to_size(const std::string& key, const Entry& e) {
  return static_cast<std::size_t>(to_u64(key, e));
}

double to_double(const std::string& key, const Entry& e, std::string_view text) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    bad_value(key, e, "expected a finite number");
  }
  return v;
}

double to_double(const std::string& key, const Entry& e) { return to_double(key, e, e.value); }

std::vector<std::string> to_list(const Entry& e) {
  std::vector<std::string> out;
  if (trim(e.value).empty()) return out;
  std::istringstream in(e.value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

const char* kind_name(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Toy:
      return "toy";
    case DatasetKind::Idx:
      return "idx";
    case DatasetKind::SyntheticImage:
      return "synthetic-image";
  }
  return "?";
}

const char* loss_name(LossKind loss) {
  return loss == LossKind::SoftmaxCrossEntropy ? "softmax-cross-entropy" : "mean-squared-error";
}

using Handler = std::function<void(ExperimentConfig&, const std::string& key, const Entry&)>;

void apply(const std::map<std::string, Entry>& entries, const std::string& section,
           const std::map<std::string, Handler>& handlers, ExperimentConfig& config) {
  for (const auto& [key, entry] : entries) {
    const std::string full = section + "." + key;
    auto it = handlers.find(key);
    if (it == handlers.end()) {
      throw ConfigError(fmt::format("line {}: unknown key '{}'", entry.line, full), full, entry.line);
    }
    it->second(config, full, entry);
  }
}

void apply_dataset(const std::map<std::string, Entry>& entries, ExperimentConfig& config) {
  DatasetSpec& ds = config.dataset;
  if (auto it = entries.find("kind"); it != entries.end()) {
    const std::string& v = it->second.value;
    if (v == "toy") {
      ds.kind = DatasetKind::Toy;
    } else if (v == "idx") {
      ds.kind = DatasetKind::Idx;
    } else if (v == "synthetic-image") {
      ds.kind = DatasetKind::SyntheticImage;
    } else {
      bad_value("dataset.kind", it->second, "expected toy, idx or synthetic-image");
    }
  }
  std::map<std::string, Handler> h;
  h["kind"] = [](ExperimentConfig&, const std::string&, const Entry&) {};
  switch (ds.kind) {
    case DatasetKind::Toy:
      h["train_samples"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.toy.n_train = to_size(k, e); };
      h["test_samples"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.toy.n_test = to_size(k, e); };
      h["seed"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.toy.seed = to_u64(k, e); };
      h["dim"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.toy.dim = to_size(k, e); };
      h["informative"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.toy.n_informative = to_size(k, e); };
      break;
    case DatasetKind::SyntheticImage:
      h["train_samples"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.bars.n_train = to_size(k, e); };
      h["test_samples"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.bars.n_test = to_size(k, e); };
      h["seed"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.bars.seed = to_u64(k, e); };
      h["height"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.bars.height = to_size(k, e); };
      h["width"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.bars.width = to_size(k, e); };
      h["channels"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.bars.channels = to_size(k, e); };
      h["bar_width"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.bars.bar_width = to_size(k, e); };
      h["jitter"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.bars.jitter = to_size(k, e); };
      h["noise"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.dataset.bars.noise = to_double(k, e); };
      break;
    case DatasetKind::Idx:
      h["train_images"] = [](ExperimentConfig& c, const std::string&, const Entry& e) { c.dataset.train_images = e.value; };
      h["train_labels"] = [](ExperimentConfig& c, const std::string&, const Entry& e) { c.dataset.train_labels = e.value; };
      h["test_images"] = [](ExperimentConfig& c, const std::string&, const Entry& e) { c.dataset.test_images = e.value; };
      h["test_labels"] = [](ExperimentConfig& c, const std::string&, const Entry& e) { c.dataset.test_labels = e.value; };
      break;
  }
  apply(entries, "dataset", h, config);
}

void apply_model(const std::map<std::string, Entry>& entries, ExperimentConfig& config) {
  bool least_squares = std::holds_alternative<LeastSquaresSpec>(config.model);
  if (auto it = entries.find("kind"); it != entries.end()) {
    if (it->second.value == "mlp") {
      least_squares = false;
    } else if (it->second.value == "least-squares") {
      least_squares = true;
    } else {
      bad_value("model.kind", it->second, "expected mlp or least-squares");
    }
  }
  if (least_squares && !std::holds_alternative<LeastSquaresSpec>(config.model)) config.model = LeastSquaresSpec{};
  if (!least_squares && !std::holds_alternative<MlpSpec>(config.model)) config.model = MlpSpec{{64}};

  std::map<std::string, Handler> h;
  h["kind"] = [](ExperimentConfig&, const std::string&, const Entry&) {};
  if (least_squares) {
    h["ridge"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) {
      std::get<LeastSquaresSpec>(c.model).ridge = to_double(k, e);
    };
  } else {
    h["hidden"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) {
      auto& hidden = std::get<MlpSpec>(c.model).hidden;
      hidden.clear();
      for (const std::string& item : to_list(e)) hidden.push_back(to_size(k, Entry{item, e.line}));
    };
  }
  apply(entries, "model", h, config);
}

std::map<std::string, Handler> estimator_option_handlers(bool overrides, const std::string& id) {
  std::map<std::string, Handler> h;
  if (overrides) {
    h["samples"] = [id](ExperimentConfig& c, const std::string& k, const Entry& e) { c.estimator_overrides[id].samples = to_size(k, e); };
    h["noise_fraction"] = [id](ExperimentConfig& c, const std::string& k, const Entry& e) { c.estimator_overrides[id].noise_fraction = to_double(k, e); };
    h["ig_steps"] = [id](ExperimentConfig& c, const std::string& k, const Entry& e) { c.estimator_overrides[id].ig_steps = to_size(k, e); };
  } else {
    h["samples"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.estimator_defaults.samples = to_size(k, e); };
    h["noise_fraction"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.estimator_defaults.noise_fraction = to_double(k, e); };
    h["ig_steps"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.estimator_defaults.ig_steps = to_size(k, e); };
    h["ids"] = [](ExperimentConfig& c, const std::string&, const Entry& e) { c.estimators = to_list(e); };
  }
  return h;
}

// Line on which `key` ("section.key") was defined, or 0.
std::size_t line_of(const RawConfig& raw, const std::string& key) {
  const auto dot = key.rfind('.');
  if (dot == std::string::npos) {
    for (const auto& [name, line] : raw.sections) {
      if (name == key) return line;
    }
    return 0;
  }
  auto s = raw.entries.find(key.substr(0, dot));
  if (s == raw.entries.end()) return 0;
  auto e = s->second.find(key.substr(dot + 1));
  return e == s->second.end() ? 0 : e->second.line;
}

}  // namespace

EstimatorOptions ExperimentConfig::options_for(const std::string& estimator_id) const {
  EstimatorOptions out = estimator_defaults;
  if (auto it = estimator_overrides.find(estimator_id); it != estimator_overrides.end()) {
    if (it->second.samples) out.samples = *it->second.samples;
    if (it->second.noise_fraction) out.noise_fraction = *it->second.noise_fraction;
    if (it->second.ig_steps) out.ig_steps = *it->second.ig_steps;
  }
  return out;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError(fmt::format("{}: {}", key, why), key);
  };

  if (estimators.empty()) fail("estimators.ids", "at least one estimator is required");
  std::set<std::string> seen;
  for (const std::string& id : estimators) {
    EstimatorSpec spec;
    try {
      spec = EstimatorSpec::parse(id);
    } catch (const Error&) {
      fail("estimators.ids", fmt::format("unknown estimator '{}'", id));
    }
    if (!seen.insert(id).second) fail("estimators.ids", fmt::format("duplicate estimator '{}'", id));
    if (spec.kind == EstimatorSpec::Kind::Sobel && dataset.kind == DatasetKind::Toy) {
      fail("estimators.ids", "sobel needs image data; the toy dataset has none");
    }
  }
  for (const auto& [id, ov] : estimator_overrides) {
    if (!seen.count(id)) fail("estimator " + id, "override for an estimator not listed in estimators.ids");
  }
  for (const std::string& id : estimators) {
    const EstimatorOptions o = options_for(id);
    if (o.samples == 0) fail("estimators.samples", fmt::format("{}: must be at least 1", id));
    if (o.ig_steps == 0) fail("estimators.ig_steps", fmt::format("{}: must be at least 1", id));
    if (!(o.noise_fraction >= 0.0)) fail("estimators.noise_fraction", fmt::format("{}: must be non-negative", id));
  }

  if (thresholds.empty()) fail("grid.thresholds", "at least one threshold is required");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] >= 0.0 && thresholds[i] <= 1.0)) {
      fail("grid.thresholds", fmt::format("{} is outside [0, 1]", thresholds[i]));
    }
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
      fail("grid.thresholds", "thresholds must be strictly ascending");
    }
  }
  if (modes.empty()) fail("grid.modes", "at least one mode is required");
  if (modes.size() == 2 && modes[0] == modes[1]) fail("grid.modes", "duplicate mode");
  if (modes.size() > 2) fail("grid.modes", "at most roar and kar");
  if (runs_per_point == 0) fail("grid.runs_per_point", "must be at least 1");

  if (const auto* mlp = std::get_if<MlpSpec>(&model)) {
    for (std::size_t w : mlp->hidden) {
      if (w == 0) fail("model.hidden", "layer widths must be positive");
    }
  } else if (!(std::get<LeastSquaresSpec>(model).ridge >= 0.0)) {
    fail("model.ridge", "must be non-negative");
  }
  if (!(train.learning_rate > 0.0)) fail("train.learning_rate", "must be positive");
  if (train.steps == 0) fail("train.steps", "must be positive");
  if (train.batch_size == 0) fail("train.batch_size", "must be positive");
  if (workers == 0) fail("experiment.workers", "must be at least 1");
  if (output.empty()) fail("experiment.output", "must not be empty");

  std::size_t n_train = 0;
  switch (dataset.kind) {
    case DatasetKind::Toy:
      if (dataset.toy.dim == 0) fail("dataset.dim", "must be positive");
      if (dataset.toy.n_informative == 0 || dataset.toy.n_informative > dataset.toy.dim) {
        fail("dataset.informative", "must be in [1, dim]");
      }
      if (dataset.toy.n_train == 0) fail("dataset.train_samples", "must be positive");
      if (dataset.toy.n_test == 0) fail("dataset.test_samples", "must be positive");
      n_train = dataset.toy.n_train;
      break;
    case DatasetKind::SyntheticImage: {
      const BarsConfig& b = dataset.bars;
      if (b.height == 0) fail("dataset.height", "must be positive");
      if (b.width == 0) fail("dataset.width", "must be positive");
      if (b.channels == 0) fail("dataset.channels", "must be positive");
      if (b.bar_width == 0 || b.bar_width > std::min(b.height, b.width)) {
        fail("dataset.bar_width", "must fit inside the image");
      }
      if (!(b.noise >= 0.0)) fail("dataset.noise", "must be non-negative");
      if (b.n_train == 0) fail("dataset.train_samples", "must be positive");
      if (b.n_test == 0) fail("dataset.test_samples", "must be positive");
      n_train = b.n_train;
      break;
    }
    case DatasetKind::Idx:
      for (const auto& [key, path] : {std::pair{"dataset.train_images", &dataset.train_images},
                                      std::pair{"dataset.train_labels", &dataset.train_labels},
                                      std::pair{"dataset.test_images", &dataset.test_images},
                                      std::pair{"dataset.test_labels", &dataset.test_labels}}) {
        if (path->empty()) fail(key, "path is required for idx datasets");
        if (!std::filesystem::exists(*path)) fail(key, fmt::format("'{}' does not exist", *path));
      }
      break;
  }
  if (std::holds_alternative<MlpSpec>(model) && n_train != 0 && train.batch_size > n_train) {
    fail("train.batch_size", "must not exceed the number of training samples");
  }
}

ExperimentConfig parse_config(const std::string& text, bool validate) {
  const RawConfig raw = tokenize(text);
  ExperimentConfig config;

  // Dataset first so later sections see the dataset kind.
  if (auto it = raw.entries.find("dataset"); it != raw.entries.end()) apply_dataset(it->second, config);
  if (auto it = raw.entries.find("model"); it != raw.entries.end()) apply_model(it->second, config);

  for (const auto& [section, line] : raw.sections) {
    const auto& entries = raw.entries.at(section);
    if (section == "dataset" || section == "model") continue;
    std::map<std::string, Handler> h;
    if (section == "estimators") {
      h = estimator_option_handlers(false, {});
    } else if (section.starts_with("estimator ")) {
      h = estimator_option_handlers(true, section.substr(10));
      config.estimator_overrides[section.substr(10)];
    } else if (section == "grid") {
      h["thresholds"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) {
        c.thresholds.clear();
        for (const std::string& item : to_list(e)) c.thresholds.push_back(to_double(k, e, item));
      };
      h["modes"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) {
        c.modes.clear();
        for (const std::string& item : to_list(e)) {
          if (item != "roar" && item != "kar") bad_value(k, e, "modes are roar and kar");
          c.modes.push_back(parse_mode(item));
        }
      };
      h["runs_per_point"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.runs_per_point = to_size(k, e); };
    } else if (section == "train") {
      h["learning_rate"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.train.learning_rate = to_double(k, e); };
      h["steps"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.train.steps = to_size(k, e); };
      h["batch_size"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.train.batch_size = to_size(k, e); };
      h["loss"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) {
        if (e.value == "softmax-cross-entropy") {
          c.train.loss = LossKind::SoftmaxCrossEntropy;
        } else if (e.value == "mean-squared-error") {
          c.train.loss = LossKind::MeanSquaredError;
        } else {
          bad_value(k, e, "expected softmax-cross-entropy or mean-squared-error");
        }
      };
    } else if (section == "experiment") {
      h["seed"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.seed = to_u64(k, e); };
      h["output"] = [](ExperimentConfig& c, const std::string&, const Entry& e) { c.output = e.value; };
      h["workers"] = [](ExperimentConfig& c, const std::string& k, const Entry& e) { c.workers = to_size(k, e); };
    } else {
      throw ConfigError(fmt::format("line {}: unknown section [{}]", line, section), section, line);
    }
    apply(entries, section, h, config);
  }

  if (!validate) return config;
  try {
    config.validate();
  } catch (const ConfigError& e) {
    const std::size_t line = line_of(raw, e.key());
    if (line == 0) throw;
    throw ConfigError(fmt::format("line {}: {}", line, e.what()), e.key(), line);
  }
  return config;
}

std::string serialize_config(const ExperimentConfig& c) {
  std::string out = "[dataset]\n";
  out += fmt::format("kind = {}\n", kind_name(c.dataset.kind));
  switch (c.dataset.kind) {
    case DatasetKind::Toy: {
      const ToyConfig& t = c.dataset.toy;
      out += fmt::format("train_samples = {}\ntest_samples = {}\nseed = {}\ndim = {}\ninformative = {}\n",
                         t.n_train, t.n_test, t.seed, t.dim, t.n_informative);
      break;
    }
    case DatasetKind::SyntheticImage: {
      const BarsConfig& b = c.dataset.bars;
      out += fmt::format(
          "train_samples = {}\ntest_samples = {}\nseed = {}\nheight = {}\nwidth = {}\n"
          "channels = {}\nbar_width = {}\njitter = {}\nnoise = {}\n",
          b.n_train, b.n_test, b.seed, b.height, b.width, b.channels, b.bar_width, b.jitter, b.noise);
      break;
    }
    case DatasetKind::Idx:
      out += fmt::format("train_images = {}\ntrain_labels = {}\ntest_images = {}\ntest_labels = {}\n",
                         c.dataset.train_images, c.dataset.train_labels, c.dataset.test_images,
                         c.dataset.test_labels);
      break;
  }

  out += "\n[estimators]\n";
  out += fmt::format("ids = {}\n", fmt::join(c.estimators, ", "));
  out += fmt::format("samples = {}\nnoise_fraction = {}\nig_steps = {}\n", c.estimator_defaults.samples,
                     c.estimator_defaults.noise_fraction, c.estimator_defaults.ig_steps);
  for (const auto& [id, ov] : c.estimator_overrides) {
    out += fmt::format("\n[estimator {}]\n", id);
    if (ov.samples) out += fmt::format("samples = {}\n", *ov.samples);
    if (ov.noise_fraction) out += fmt::format("noise_fraction = {}\n", *ov.noise_fraction);
    if (ov.ig_steps) out += fmt::format("ig_steps = {}\n", *ov.ig_steps);
  }

  std::vector<std::string> modes;
  for (ModificationMode m : c.modes) modes.emplace_back(mode_name(m));
  out += "\n[grid]\n";
  out += fmt::format("thresholds = {}\nmodes = {}\nruns_per_point = {}\n", fmt::join(c.thresholds, ", "),
                     fmt::join(modes, ", "), c.runs_per_point);

  out += "\n[model]\n";
  if (const auto* mlp = std::get_if<MlpSpec>(&c.model)) {
    out += fmt::format("kind = mlp\nhidden = {}\n", fmt::join(mlp->hidden, ", "));
  } else {
    out += fmt::format("kind = least-squares\nridge = {}\n", std::get<LeastSquaresSpec>(c.model).ridge);
  }

  out += "\n[train]\n";
  out += fmt::format("learning_rate = {}\nsteps = {}\nbatch_size = {}\nloss = {}\n", c.train.learning_rate,
                     c.train.steps, c.train.batch_size, loss_name(c.train.loss));

  out += "\n[experiment]\n";
  out += fmt::format("seed = {}\noutput = {}\nworkers = {}\n", c.seed, c.output, c.workers);
  return out;
}

}  // namespace roar

#include "roar/persistence.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "roar/errors.hpp"
#include "roar/rng.hpp"

namespace roar {
namespace {

constexpr const char* kDatasetFormat = "roar-modified-dataset v1";
constexpr const char* kEstimateFormat = "roar-estimates v1";

template <typename UInt>
void append_le(std::string& out, UInt v) {
  for (std::size_t b = 0; b < sizeof(UInt); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

template <typename UInt>
UInt read_le(const std::string& bytes, std::size_t offset) {
  UInt v = 0;
  for (std::size_t b = 0; b < sizeof(UInt); ++b) {
    v |= static_cast<UInt>(static_cast<unsigned char>(bytes[offset + b])) << (8 * b);
  }
  return v;
}

std::string encode_f32(const Tensor& t) {
  std::string out;
  out.reserve(t.size() * 4);
  for (double v : t.data()) append_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

std::string encode_f64(const Tensor& t) {
  std::string out;
  out.reserve(t.size() * 8);
  for (double v : t.data()) append_le(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

std::string encode_labels(const std::vector<std::uint32_t>& labels) {
  std::string out;
  out.reserve(labels.size() * 4);
  for (std::uint32_t v : labels) append_le(out, v);
  return out;
}

std::uint64_t checksum(std::initializer_list<const std::string*> blobs) {
  std::uint64_t state = 0xcbf29ce484222325ULL;
  for (const std::string* b : blobs) state = fnv1a64(*b, state);
  return state;
}

std::uint64_t parse_u64(const std::string& text, const std::string& key) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError(fmt::format("manifest: '{}' is not an integer for '{}'", text, key));
  }
  return v;
}

double parse_f64(const std::string& text, const std::string& key) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError(fmt::format("manifest: '{}' is not a number for '{}'", text, key));
  }
  return v;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  return {std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
}

Shape parse_shape(const std::string& text, const std::string& key) {
  Shape shape;
  for (const std::string& w : split_words(text)) shape.push_back(parse_u64(w, key));
  return shape;
}

}  // namespace

void atomic_write(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(fmt::format("failed writing '{}'", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const std::string& Manifest::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw FormatError(fmt::format("manifest: missing key '{}'", key));
  return it->second;
}

std::string Manifest::str() const {
  std::string out = format_ + "\n";
  for (const auto& [k, v] : entries_) out += fmt::format("{} {}\n", k, v);
  return out;
}

Manifest Manifest::parse(const std::string& text, const std::string& format) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != format) {
    throw FormatError(fmt::format("manifest: expected format tag '{}'", format));
  }
  Manifest m(format);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0) {
      throw FormatError(fmt::format("manifest line {}: expected 'key value'", line_no));
    }
    m.entries_[line.substr(0, space)] = line.substr(space + 1);
  }
  return m;
}

void round_to_float32(SplitDataset& data) {
  for (Dataset* split : {&data.train, &data.test}) {
    for (double& v : split->features.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

void save_modified_dataset(const ModifiedDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const SplitDataset& d = dataset.data;
  const std::string train_x = encode_f32(d.train.features);
  const std::string train_y = encode_labels(d.train.labels);
  const std::string test_x = encode_f32(d.test.features);
  const std::string test_y = encode_labels(d.test.labels);
  atomic_write(dir / "train_features.f32", train_x);
  atomic_write(dir / "train_labels.u32", train_y);
  atomic_write(dir / "test_features.f32", test_x);
  atomic_write(dir / "test_labels.u32", test_y);

  const Provenance& p = dataset.provenance;
  Manifest m(kDatasetFormat);
  m.set("estimator", p.estimator_id);
  m.set("threshold", format_threshold(p.threshold));
  m.set("mode", mode_name(p.mode));
  m.set("seed", std::to_string(p.seed));
  m.set("source", p.source_id);
  m.set("num_classes", std::to_string(d.num_classes));
  m.set("train_shape", fmt::format("{}", fmt::join(d.train.features.shape(), " ")));
  m.set("test_shape", fmt::format("{}", fmt::join(d.test.features.shape(), " ")));
  m.set("image", d.image ? fmt::format("{} {} {}", d.image->height, d.image->width, d.image->channels)
                         : std::string("none"));
  m.set("norm_offset", fmt::format("{}", fmt::join(d.normalization.offset, " ")));
  m.set("norm_scale", fmt::format("{}", fmt::join(d.normalization.scale, " ")));
  m.set("checksum", fmt::format("{:016x}", checksum({&train_x, &train_y, &test_x, &test_y})));
  atomic_write(dir / "manifest.txt", m.str());
}

ModifiedDataset load_modified_dataset(const std::filesystem::path& dir) {
  const std::string cell = dir.filename().string();
  try {
    const Manifest m = Manifest::parse(read_file(dir / "manifest.txt"), kDatasetFormat);
    const std::string train_x = read_file(dir / "train_features.f32");
    const std::string train_y = read_file(dir / "train_labels.u32");
    const std::string test_x = read_file(dir / "test_features.f32");
    const std::string test_y = read_file(dir / "test_labels.u32");
    if (fmt::format("{:016x}", checksum({&train_x, &train_y, &test_x, &test_y})) != m.get("checksum")) {
      throw IntegrityError(fmt::format("dataset '{}': checksum mismatch", dir.string()), cell);
    }

    ModifiedDataset out;
    out.provenance.estimator_id = m.get("estimator");
    out.provenance.threshold = parse_f64(m.get("threshold"), "threshold");
    out.provenance.mode = parse_mode(m.get("mode"));
    out.provenance.seed = parse_u64(m.get("seed"), "seed");
    out.provenance.source_id = m.get("source");

    SplitDataset& d = out.data;
    d.num_classes = parse_u64(m.get("num_classes"), "num_classes");
    d.source_id = out.provenance.source_id;
    if (m.get("image") != "none") {
      const Shape s = parse_shape(m.get("image"), "image");
      if (s.size() != 3) throw FormatError("manifest: image needs three dimensions");
      d.image = ImageShape{s[0], s[1], s[2]};
    }
    for (const std::string& w : split_words(m.get("norm_offset"))) d.normalization.offset.push_back(parse_f64(w, "norm_offset"));
    for (const std::string& w : split_words(m.get("norm_scale"))) d.normalization.scale.push_back(parse_f64(w, "norm_scale"));

    auto decode = [&](const std::string& xs, const std::string& ys, const std::string& key) {
      const Shape shape = parse_shape(m.get(key), key);
      if (shape.size() != 2 || xs.size() != shape_size(shape) * 4 || ys.size() != shape[0] * 4) {
        throw FormatError(fmt::format("dataset '{}': {} does not match data files", dir.string(), key));
      }
      Dataset split{Tensor(shape), std::vector<std::uint32_t>(shape[0])};
      auto v = split.features.data();
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<double>(std::bit_cast<float>(read_le<std::uint32_t>(xs, 4 * i)));
      }
      for (std::size_t i = 0; i < shape[0]; ++i) split.labels[i] = read_le<std::uint32_t>(ys, 4 * i);
      return split;
    };
    d.train = decode(train_x, train_y, "train_shape");
    d.test = decode(test_x, test_y, "test_shape");
    d.validate();
    return out;
  } catch (const IntegrityError&) {
    throw;
  } catch (const Error& e) {
    throw IntegrityError(fmt::format("dataset '{}': {}", dir.string(), e.what()), cell);
  }
}

void save_estimates(const EstimateSet& estimates, const Shape& sample_shape,
                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t per_sample = shape_size(sample_shape);
  auto pack = [&](const std::vector<Tensor>& scores) {
    Tensor all({scores.size(), per_sample});
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i].size() != per_sample) throw DimensionError("save_estimates: ragged estimates");
      std::copy(scores[i].data().begin(), scores[i].data().end(), all.row(i).begin());
    }
    return encode_f64(all);
  };
  const std::string train = pack(estimates.train);
  const std::string test = pack(estimates.test);
  const std::string& id = estimates.estimator_id;
  atomic_write(dir / (id + ".train.f64"), train);
  atomic_write(dir / (id + ".test.f64"), test);
  Manifest m(kEstimateFormat);
  m.set("estimator", id);
  m.set("seed", std::to_string(estimates.seed));
  m.set("sample_shape", fmt::format("{}", fmt::join(sample_shape, " ")));
  m.set("train_count", std::to_string(estimates.train.size()));
  m.set("test_count", std::to_string(estimates.test.size()));
  m.set("checksum", fmt::format("{:016x}", checksum({&train, &test})));
  atomic_write(dir / (id + ".manifest"), m.str());
}

EstimateSet load_estimates(const std::string& estimator_id, const std::filesystem::path& dir) {
  try {
    const Manifest m = Manifest::parse(read_file(dir / (estimator_id + ".manifest")), kEstimateFormat);
    const std::string train = read_file(dir / (estimator_id + ".train.f64"));
    const std::string test = read_file(dir / (estimator_id + ".test.f64"));
    if (fmt::format("{:016x}", checksum({&train, &test})) != m.get("checksum")) {
      throw IntegrityError(fmt::format("estimates '{}': checksum mismatch", estimator_id), estimator_id);
    }
    const Shape sample_shape = parse_shape(m.get("sample_shape"), "sample_shape");
    const std::size_t per_sample = shape_size(sample_shape);
    auto unpack = [&](const std::string& bytes, std::size_t count) {
      if (bytes.size() != count * per_sample * 8) throw FormatError("estimates: size mismatch");
      std::vector<Tensor> out;
      out.reserve(count);
      for (std::size_t s = 0; s < count; ++s) {
        Tensor t(sample_shape);
        for (std::size_t i = 0; i < per_sample; ++i) {
          t[i] = std::bit_cast<double>(read_le<std::uint64_t>(bytes, 8 * (s * per_sample + i)));
        }
        out.push_back(std::move(t));
      }
      return out;
    };
    EstimateSet out;
    out.estimator_id = m.get("estimator");
    out.seed = parse_u64(m.get("seed"), "seed");
    out.train = unpack(train, parse_u64(m.get("train_count"), "train_count"));
    out.test = unpack(test, parse_u64(m.get("test_count"), "test_count"));
    return out;
  } catch (const IntegrityError&) {
    throw;
  } catch (const Error& e) {
    throw IntegrityError(fmt::format("estimates '{}': {}", estimator_id, e.what()), estimator_id);
  }
}

}  // namespace roar

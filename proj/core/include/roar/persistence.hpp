#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "roar/pipeline.hpp"

namespace roar {

/// Writes `contents` to a temporary sibling and renames it over `path`, so
/// readers never see a partially written file.
void atomic_write(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Plain-text `key value...` manifest, one entry per line. The first line is
/// a format tag.
class Manifest {
 public:
  explicit Manifest(std::string format = {}) : format_(std::move(format)) {}

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  /// Throws FormatError if the key is missing.
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& format() const { return format_; }

  std::string str() const;
  /// Throws FormatError on malformed text or a format tag other than `format`.
  static Manifest parse(const std::string& text, const std::string& format);

 private:
  std::string format_;
  std::map<std::string, std::string> entries_;
};

/// Persists a modified dataset as little-endian float32 feature files,
/// little-endian uint32 label files and a manifest holding the provenance,
/// shapes, and an FNV-1a checksum of the data files:
///
///   dir/train_features.f32  dir/train_labels.u32
///   dir/test_features.f32   dir/test_labels.u32
///   dir/manifest.txt        (written last)
void save_modified_dataset(const ModifiedDataset& dataset, const std::filesystem::path& dir);

/// Reads a dataset written by save_modified_dataset. A missing or corrupt
/// manifest or a checksum mismatch raises IntegrityError naming `dir`.
ModifiedDataset load_modified_dataset(const std::filesystem::path& dir);

/// Features rounded through float32, as they would be after a save/load.
void round_to_float32(SplitDataset& data);

/// Persists an estimate set as float64 arrays `<id>.train.f64`,
/// `<id>.test.f64` plus `<id>.manifest` inside `dir`.
void save_estimates(const EstimateSet& estimates, const Shape& sample_shape,
                    const std::filesystem::path& dir);
EstimateSet load_estimates(const std::string& estimator_id, const std::filesystem::path& dir);

}  // namespace roar

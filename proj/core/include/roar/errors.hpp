#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace roar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes do not line up. `layer()` is the index of the
/// offending layer, or npos when the mismatch is not tied to a layer.
class DimensionError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit DimensionError(const std::string& what, std::size_t layer = npos)
      : Error(what), layer_(layer) {}

  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

class TargetError : public Error {
 public:
  using Error::Error;
};

/// Training failed; `step()` is the optimizer step at which it happened.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file is shorter (or longer) than its header promises.
class LengthError : public Error {
 public:
  LengthError(const std::string& what, std::size_t expected, std::size_t actual)
      : Error(what), expected_(expected), actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class MetadataError : public Error {
 public:
  using Error::Error;
};

class ProvenanceError : public Error {
 public:
  using Error::Error;
};

/// Configuration problem. `key()` may be empty for structural errors;
/// `line()` is 0 when the error is not tied to a source line.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::string key = {}, std::size_t line = 0)
      : Error(what), key_(std::move(key)), line_(line) {}

  const std::string& key() const noexcept { return key_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

/// A results directory is inconsistent (corrupt manifest, checksum mismatch).
class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& what, std::string cell)
      : Error(what), cell_(std::move(cell)) {}

  const std::string& cell() const noexcept { return cell_; }

 private:
  std::string cell_;
};

}  // namespace roar

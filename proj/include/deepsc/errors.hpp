#pragma once

#include <stdexcept>
#include <string>

namespace deepsc {

// Shape or dimension violations on tensor operations.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Broken call contract (non-scalar backward, missing grad, wrong block length, ...).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Malformed input files (WAV headers, checkpoints, CSV).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Well-formed file but an encoding we do not handle.
class UnsupportedFormatError : public std::runtime_error {
 public:
  explicit UnsupportedFormatError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid experiment configuration. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Dataset problems (empty directory, unreadable manifest).
class DatasetError : public std::runtime_error {
 public:
  explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint hyperparameters do not match the running configuration.
class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// Training produced a non-finite loss. CLI maps this to exit code 3.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// External scorer misbehaved (unparseable or out-of-range output).
class ScorerError : public std::runtime_error {
 public:
  explicit ScorerError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace deepsc

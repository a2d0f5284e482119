#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace reflprior {

// Malformed or non-finite arguments.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// One or more named parameters lie outside their admissible range.
class RangeViolation : public InvalidInput {
 public:
  RangeViolation(const std::string& what, std::vector<std::string> fields)
      : InvalidInput(what), fields_(std::move(fields)) {}
  const std::vector<std::string>& fields() const { return fields_; }

 private:
  std::vector<std::string> fields_;
};

// Operation not permitted in the current mode (e.g. batch norm training on one sample).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Curve discretization not accepted by a checkpoint.
class GridIncompatible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(const std::string& what, std::string dump_path)
      : std::runtime_error(what), dump_path_(std::move(dump_path)) {}
  const std::string& dump_path() const { return dump_path_; }

 private:
  std::string dump_path_;
};

// Parse/validation failure in a structured-text config, with a location.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string field, int line = 0)
      : std::runtime_error(what), field_(std::move(field)), line_(line) {}
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

}  // namespace reflprior

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace t2v {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition on shapes, ranges or argument combinations.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A visible/thermal capture without its counterpart, or a pair whose
// identity/variation keys disagree.
class PairingError : public Error {
 public:
  PairingError(const std::string& what, int identity, int variation)
      : Error(what), identity_(identity), variation_(variation) {}
  int identity() const { return identity_; }
  int variation() const { return variation_; }

 private:
  int identity_;
  int variation_;
};

class IngestionError : public Error {
 public:
  IngestionError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class IncompatibleError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  explicit TrainingDivergedError(std::size_t step)
      : Error("training diverged: non-finite loss at step " + std::to_string(step)),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace t2v

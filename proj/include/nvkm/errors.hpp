#pragma once

#include <stdexcept>
#include <string>

namespace nvkm {

// Gram matrix could not be factorized even after jitter escalation.
class IllConditionedGram : public std::runtime_error {
 public:
  explicit IllConditionedGram(const std::string& what) : std::runtime_error(what) {}
};

// Imaginary residual of a conjugate-pair assembly exceeded tolerance.
// Signals an implementation bug, not a data condition.
class NumericInconsistency : public std::runtime_error {
 public:
  explicit NumericInconsistency(const std::string& what) : std::runtime_error(what) {}
};

class IncompatibleCheckpoint : public std::runtime_error {
 public:
  explicit IncompatibleCheckpoint(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

class EmptySeries : public std::runtime_error {
 public:
  explicit EmptySeries(const std::string& what) : std::runtime_error(what) {}
};

class UndefinedMetric : public std::runtime_error {
 public:
  explicit UndefinedMetric(const std::string& what) : std::runtime_error(what) {}
};

class UnsupportedOrder : public std::invalid_argument {
 public:
  explicit UnsupportedOrder(const std::string& what) : std::invalid_argument(what) {}
};

// A training step produced a non-finite quantity.
class NumericFailure : public std::runtime_error {
 public:
  explicit NumericFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nvkm

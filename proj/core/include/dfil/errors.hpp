#pragma once

#include <stdexcept>
#include <string>

namespace dfil {

// Error taxonomy. The CLI maps these onto exit codes: usage/config/data
// problems exit 2, numeric aborts exit 3.

// Tensor shapes do not match what an operation requires.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An argument is outside its documented domain (empty batch, T <= 0, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced (or would consume) a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Replay selection cannot be satisfied (insufficient samples, empty class).
class SelectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Teacher/student protocol violated (e.g. missing teacher on a later task).
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Queried state does not exist yet (incomplete accuracy-matrix row, ...).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A metric is undefined on the given input (single-class AUC, ...).
class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file content; message carries the offending line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that violates a semantic contract (label outside {0,1},
// a class missing from a dataset, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A synthetic-stream spec cannot be sampled from.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dfil

#pragma once

#include <stdexcept>
#include <string>

namespace otfuse {

// Bad arguments or incompatible shapes, caught before any computation starts.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failures discovered mid-computation (NaN loss, solver degeneracy).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Multiplicative Sinkhorn scaling hit zero/non-finite factors; the log-domain
// path handles these inputs.
class SinkhornUnderflowError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Column-wise argmax of a coupling selected the same row twice, so the plan is
// not (close enough to) a permutation vertex.
class PermutationExtractionError : public NumericError {
 public:
  PermutationExtractionError(int row, int col_a, int col_b)
      : NumericError("permutation extraction collision: row " + std::to_string(row) +
                     " is the argmax of columns " + std::to_string(col_a) + " and " +
                     std::to_string(col_b)),
        row(row),
        col_a(col_a),
        col_b(col_b) {}

  int row;
  int col_a;
  int col_b;
};

// Filesystem-level failures (missing file, short read, unwritable path).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File exists but its contents are not the expected container.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

// Container is recognised but carries an unsupported version tag.
class VersionError : public IoError {
 public:
  using IoError::IoError;
};

// Container is recognised but its declared shapes contradict its payload.
class FileShapeError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace otfuse

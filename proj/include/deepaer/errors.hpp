#pragma once

#include <stdexcept>
#include <string>

namespace deepaer {

// Shape or size violation in a layer kernel, model assembly, or ensemble wiring.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value where a finite one is required (logits, gradients).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset container problems, split by cause so callers can report precisely.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ManifestError : DataError {
  using DataError::DataError;
};
struct SizeMismatchError : DataError {
  using DataError::DataError;
};
struct SampleError : DataError {
  using DataError::DataError;
};
struct RatingError : DataError {
  using DataError::DataError;
};

// Weight-file problems.
struct WeightsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct WeightsHeaderError : WeightsError {
  using WeightsError::WeightsError;
};
struct WeightsVersionError : WeightsError {
  using WeightsError::WeightsError;
};
struct WeightsShapeError : WeightsError {
  using WeightsError::WeightsError;
};

}  // namespace deepaer

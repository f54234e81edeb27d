#pragma once

#include <stdexcept>
#include <string>

namespace strcn {

struct StrcnError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Zero inter-ocular distance, empty crop rect, and similar.
struct GeometryError : StrcnError {
  using StrcnError::StrcnError;
};

// Rank-deficient local polynomial fit (collinear neighborhood).
struct SingularFitError : StrcnError {
  using StrcnError::StrcnError;
};

// No heat-map value strictly exceeds the percentile threshold.
struct DegenerateMaskError : StrcnError {
  using StrcnError::StrcnError;
};

// An op produced NaN/Inf.
struct NonFiniteError : StrcnError {
  using StrcnError::StrcnError;
};

struct ShapeError : StrcnError {
  using StrcnError::StrcnError;
};

struct IoError : StrcnError {
  using StrcnError::StrcnError;
};

struct ConfigError : StrcnError {
  using StrcnError::StrcnError;
};

// Training loss went NaN.
struct DivergenceError : StrcnError {
  using StrcnError::StrcnError;
};

}  // namespace strcn

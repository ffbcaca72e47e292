#pragma once

#include <stdexcept>
#include <string>

namespace semslam {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// geometry
struct GimbalLockError : Error { using Error::Error; };
struct LogNearCutError : Error { using Error::Error; };
struct DegenerateTrigError : Error { using Error::Error; };

// generative model
struct DimensionMismatchError : Error { using Error::Error; };
struct ResolutionMismatchError : Error { using Error::Error; };
struct SeparationInfeasibleError : Error { using Error::Error; };

// association
struct TooManyDetectionsError : Error { using Error::Error; };
struct InvalidHypothesisError : Error { using Error::Error; };

// optimizer
struct SingularNormalEquationsError : Error { using Error::Error; };

// io
struct ParseError : Error { using Error::Error; };
struct SchemaVersionMismatchError : Error { using Error::Error; };
struct LengthMismatchError : Error { using Error::Error; };

}  // namespace semslam

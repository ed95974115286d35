#pragma once

#include <stdexcept>
#include <string>

namespace icnlm {

//! Base class of every error raised by the engine.
struct EngineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// marginal
struct EmptySample : EngineError { using EngineError::EngineError; };
struct DegenerateSample : EngineError { using EngineError::EngineError; };
struct NonPositiveBandwidth : EngineError { using EngineError::EngineError; };
struct ProbabilityOutOfRange : EngineError { using EngineError::EngineError; };

// copula model
struct SpecMismatch : EngineError { using EngineError::EngineError; };
struct LengthMismatch : EngineError { using EngineError::EngineError; };
struct DimensionMismatch : EngineError { using EngineError::EngineError; };

// hmc
struct NonFiniteTrajectory : EngineError { using EngineError::EngineError; };
struct AdaptationFailure : EngineError { using EngineError::EngineError; };

// vi
struct SingularCovariance : EngineError { using EngineError::EngineError; };
struct NonFiniteElbo : EngineError { using EngineError::EngineError; };

// diagnostics
struct PitOutOfRange : EngineError { using EngineError::EngineError; };
struct MalformedInterval : EngineError { using EngineError::EngineError; };

// data io
struct IoError : EngineError { using EngineError::EngineError; };
struct ParseError : EngineError { using EngineError::EngineError; };
struct ShapeError : EngineError { using EngineError::EngineError; };
struct NonFiniteValue : EngineError { using EngineError::EngineError; };
struct ZeroColumn : EngineError { using EngineError::EngineError; };
struct VersionMismatch : EngineError { using EngineError::EngineError; };
struct ChecksumMismatch : EngineError { using EngineError::EngineError; };

}  // namespace icnlm

#pragma once

#include <stdexcept>
#include <string>

namespace nspca {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A column space collapsed below the numerical rank tolerance.
struct RankDeficientError : Error {
  using Error::Error;
};

struct ShapeMismatchError : Error {
  using Error::Error;
};

struct ConvergenceFailureError : Error {
  using Error::Error;
};

struct IndexOutOfRangeError : Error {
  using Error::Error;
};

struct InvalidParamsError : Error {
  using Error::Error;
};

// A randomized verifier instance failed the statement's own preconditions;
// drivers resample and count these rather than aborting.
struct PreconditionViolatedError : Error {
  using Error::Error;
};

struct HypothesisUnsatisfiedError : Error {
  using Error::Error;
};

struct ConstructionFailedError : Error {
  using Error::Error;
};

}  // namespace nspca

#pragma once

#include <stdexcept>
#include <string>

namespace featmetric {

// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FEATMETRIC_ERROR_TYPE(Name)       \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

FEATMETRIC_ERROR_TYPE(ShapeMismatch);
FEATMETRIC_ERROR_TYPE(DimensionTooSmall);
FEATMETRIC_ERROR_TYPE(NonPositiveDepth);
FEATMETRIC_ERROR_TYPE(InvalidWarp);
FEATMETRIC_ERROR_TYPE(EmptyValidSet);
FEATMETRIC_ERROR_TYPE(EmptyMask);
FEATMETRIC_ERROR_TYPE(NonPositiveMeanDepth);
FEATMETRIC_ERROR_TYPE(ScaleChainMismatch);
FEATMETRIC_ERROR_TYPE(InvalidConfig);
FEATMETRIC_ERROR_TYPE(InvalidPixel);
FEATMETRIC_ERROR_TYPE(IoError);
FEATMETRIC_ERROR_TYPE(ParseError);
FEATMETRIC_ERROR_TYPE(RayMiss);
FEATMETRIC_ERROR_TYPE(Diverged);
FEATMETRIC_ERROR_TYPE(TrajectoryTooShort);

#undef FEATMETRIC_ERROR_TYPE

}  // namespace featmetric

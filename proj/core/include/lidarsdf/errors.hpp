#pragma once

#include <stdexcept>
#include <string>

namespace lidarsdf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LIDARSDF_DEFINE_ERROR(Name)      \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

LIDARSDF_DEFINE_ERROR(DegenerateBeam);
LIDARSDF_DEFINE_ERROR(NonDifferentiable);
LIDARSDF_DEFINE_ERROR(RankDeficient);
LIDARSDF_DEFINE_ERROR(ObjectAtSensor);
LIDARSDF_DEFINE_ERROR(SurfaceNotConverged);
LIDARSDF_DEFINE_ERROR(DegenerateShape);
LIDARSDF_DEFINE_ERROR(ScoreOutOfRange);
LIDARSDF_DEFINE_ERROR(InfeasibleStart);
LIDARSDF_DEFINE_ERROR(DegenerateRadius);
LIDARSDF_DEFINE_ERROR(EmptyOutcomes);
LIDARSDF_DEFINE_ERROR(Diverged);
LIDARSDF_DEFINE_ERROR(FormatError);
LIDARSDF_DEFINE_ERROR(InvalidArgument);

#undef LIDARSDF_DEFINE_ERROR

}  // namespace lidarsdf

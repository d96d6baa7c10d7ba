#pragma once

#include <stdexcept>
#include <string>

namespace qfield {

// Every recoverable failure in the library derives from Error so the CLI can
// map it to an exit code without knowing the concrete type.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define QFIELD_DEFINE_ERROR(Name)                                              \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {}       \
  }

// magnetics
QFIELD_DEFINE_ERROR(PositionInsideMagnet);
QFIELD_DEFINE_ERROR(NonConvergent);
QFIELD_DEFINE_ERROR(CurrentOutOfRange);
QFIELD_DEFINE_ERROR(InvalidGeometry);

// hyperfine
QFIELD_DEFINE_ERROR(DegenerateLabeling);
QFIELD_DEFINE_ERROR(NoRootInBracket);
QFIELD_DEFINE_ERROR(NotApplicable);
QFIELD_DEFINE_ERROR(UnknownLevel);

// ac_zeeman
QFIELD_DEFINE_ERROR(ResonantDenominator);
QFIELD_DEFINE_ERROR(NonPositiveInput);
QFIELD_DEFINE_ERROR(RangeError);
QFIELD_DEFINE_ERROR(NegativeDisplacement);

// dynamics
QFIELD_DEFINE_ERROR(InvalidSequence);
QFIELD_DEFINE_ERROR(ActuatorSaturation);

// analysis
QFIELD_DEFINE_ERROR(FitFailure);

// configuration
QFIELD_DEFINE_ERROR(ConfigError);

#undef QFIELD_DEFINE_ERROR

}  // namespace qfield

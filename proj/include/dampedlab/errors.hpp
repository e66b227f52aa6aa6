#pragma once

#include <stdexcept>
#include <string>

namespace dampedlab {

// Every failure raised by the library derives from Error so callers can
// catch the family at once; the concrete type names the contract violated.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DAMPEDLAB_ERROR(Name)                 \
  class Name : public Error {                 \
   public:                                    \
    explicit Name(const std::string& what)    \
        : Error(#Name ": " + what) {}         \
  }

// fields
DAMPEDLAB_ERROR(ParseError);
DAMPEDLAB_ERROR(NonNegativeMinimum);
DAMPEDLAB_ERROR(ConstantField);
DAMPEDLAB_ERROR(InvalidParams);

// quadrature
DAMPEDLAB_ERROR(NonFiniteSample);
DAMPEDLAB_ERROR(NoConvergence);
DAMPEDLAB_ERROR(DenominatorSignChange);

// ode
DAMPEDLAB_ERROR(IntegrandBlowup);
DAMPEDLAB_ERROR(StiffnessStall);
DAMPEDLAB_ERROR(NoSignChange);

// characteristic solvers
DAMPEDLAB_ERROR(UndampedNoBlowup);
DAMPEDLAB_ERROR(PastBlowup);
DAMPEDLAB_ERROR(DomainError);

// spectral_ref
DAMPEDLAB_ERROR(NonZeroMean);
DAMPEDLAB_ERROR(CflViolation);
DAMPEDLAB_ERROR(NonFinite);

// lab
DAMPEDLAB_ERROR(ConfigError);
DAMPEDLAB_ERROR(InsufficientWindow);

#undef DAMPEDLAB_ERROR

}  // namespace dampedlab

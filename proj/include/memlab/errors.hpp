#pragma once

#include <stdexcept>
#include <string>

namespace memlab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define MEMLAB_ERROR(Name)          \
  struct Name : Error {             \
    using Error::Error;             \
  }

MEMLAB_ERROR(QuadratureFailure);
MEMLAB_ERROR(StepSizeUnderflow);
MEMLAB_ERROR(StepLimitExceeded);
MEMLAB_ERROR(NotSymmetric);
MEMLAB_ERROR(IllConditioned);
MEMLAB_ERROR(DegreeZero);
MEMLAB_ERROR(DomainError);
MEMLAB_ERROR(InvalidModel);
MEMLAB_ERROR(WFloorHit);
MEMLAB_ERROR(AnchorNotCritical);
MEMLAB_ERROR(Overflow);
MEMLAB_ERROR(DecayViolation);
MEMLAB_ERROR(CapExceeded);
MEMLAB_ERROR(Diverged);
MEMLAB_ERROR(ConfigError);

#undef MEMLAB_ERROR

}  // namespace memlab

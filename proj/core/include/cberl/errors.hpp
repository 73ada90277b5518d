#pragma once

#include <stdexcept>
#include <string>

namespace cberl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define CBERL_DEFINE_ERROR(name)                  \
  struct name : Error {                           \
    using Error::Error;                           \
  }

// corpus
CBERL_DEFINE_ERROR(MissingFile);
CBERL_DEFINE_ERROR(DimensionMismatch);
CBERL_DEFINE_ERROR(UnknownLabel);
CBERL_DEFINE_ERROR(InvalidSpec);
CBERL_DEFINE_ERROR(TooFewDialogues);
// augment
CBERL_DEFINE_ERROR(EmptyCorpus);
CBERL_DEFINE_ERROR(ShapeMismatch);
CBERL_DEFINE_ERROR(NonFiniteGradient);
CBERL_DEFINE_ERROR(UntrainedGenerator);
// fusion
CBERL_DEFINE_ERROR(NonPositiveSigma);
CBERL_DEFINE_ERROR(UntrainedFusion);
// context
CBERL_DEFINE_ERROR(EmptySequence);
// graph
CBERL_DEFINE_ERROR(InvalidRate);
// classify
CBERL_DEFINE_ERROR(NotAProbability);
CBERL_DEFINE_ERROR(DegenerateRound);
CBERL_DEFINE_ERROR(UnfittedEnsemble);
// harness
CBERL_DEFINE_ERROR(LengthMismatch);
CBERL_DEFINE_ERROR(MissingRun);
CBERL_DEFINE_ERROR(ConfigError);

#undef CBERL_DEFINE_ERROR

}  // namespace cberl

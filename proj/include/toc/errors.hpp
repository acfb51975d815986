#pragma once

#include <stdexcept>
#include <string>

namespace toc {

// Base of every error raised by the toolkit. `name()` is the stable,
// machine-readable error kind used in CLI error reports.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* name() const noexcept { return "Error"; }
};

#define TOC_DECLARE_ERROR(Kind)                                   \
  class Kind : public Error {                                     \
   public:                                                        \
    using Error::Error;                                           \
    const char* name() const noexcept override { return #Kind; } \
  }

// core-model
TOC_DECLARE_ERROR(OverlapError);
TOC_DECLARE_ERROR(GapError);
TOC_DECLARE_ERROR(EmptyError);
TOC_DECLARE_ERROR(EmptyRationaleError);
TOC_DECLARE_ERROR(ValidationError);
TOC_DECLARE_ERROR(RecordError);

// segmentation
TOC_DECLARE_ERROR(DimensionMismatchError);
TOC_DECLARE_ERROR(EmptyInputError);
TOC_DECLARE_ERROR(ZeroVectorError);

// cue-tree
TOC_DECLARE_ERROR(InvalidSizeError);
TOC_DECLARE_ERROR(OutOfRangeError);
TOC_DECLARE_ERROR(EmptySelectionError);

// llm-gateway
TOC_DECLARE_ERROR(BackendUnavailableError);
TOC_DECLARE_ERROR(AuthError);
TOC_DECLARE_ERROR(TimeoutError);
TOC_DECLARE_ERROR(UnboundPlaceholderError);
TOC_DECLARE_ERROR(ParseError);

// sft-pipeline
TOC_DECLARE_ERROR(StepCountMismatchError);

// rl-pipeline
TOC_DECLARE_ERROR(NonMultipleChoiceError);
TOC_DECLARE_ERROR(InvalidBandError);

// reward-engine
TOC_DECLARE_ERROR(RangeError);
TOC_DECLARE_ERROR(GroupTooSmallError);
TOC_DECLARE_ERROR(MisalignedSequencesError);
TOC_DECLARE_ERROR(NonFiniteError);

// cli
TOC_DECLARE_ERROR(ConfigError);
TOC_DECLARE_ERROR(UsageError);
TOC_DECLARE_ERROR(IoError);

#undef TOC_DECLARE_ERROR

}  // namespace toc

#pragma once

#include <stdexcept>
#include <string>

namespace qpe {

// Base of every error raised by the library. The CLI maps subclasses onto
// its exit-code taxonomy (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define QPE_DEFINE_ERROR(Name)          \
  class Name : public Error {           \
   public:                              \
    explicit Name(const std::string& what) \
        : Error(#Name ": " + what) {}   \
  }

// hilbert
QPE_DEFINE_ERROR(DimensionMismatch);
QPE_DEFINE_ERROR(NonPhysicalState);

// sme
QPE_DEFINE_ERROR(NumericalBlowup);
QPE_DEFINE_ERROR(DtMismatch);
QPE_DEFINE_ERROR(EmptyRecord);

// models
QPE_DEFINE_ERROR(InvalidParam);

// record
QPE_DEFINE_ERROR(IoError);
QPE_DEFINE_ERROR(FormatError);

// estimate
QPE_DEFINE_ERROR(MissingTruth);
QPE_DEFINE_ERROR(AlignmentError);
QPE_DEFINE_ERROR(InvalidGrid);
QPE_DEFINE_ERROR(BracketCollapse);
QPE_DEFINE_ERROR(AllPointsFailed);

// spectral
QPE_DEFINE_ERROR(TooFewSamples);
QPE_DEFINE_ERROR(GridMismatch);
QPE_DEFINE_ERROR(BandOutOfRange);

#undef QPE_DEFINE_ERROR

}  // namespace qpe

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace domainbridge {

// Every failure surfaced by the library derives from Error so callers can
// catch one type at the CLI boundary and still discriminate when needed.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DOMAINBRIDGE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

DOMAINBRIDGE_ERROR(IngestError);
DOMAINBRIDGE_ERROR(ShapeError);
DOMAINBRIDGE_ERROR(RangeError);
DOMAINBRIDGE_ERROR(LabelingError);
DOMAINBRIDGE_ERROR(SpecError);
DOMAINBRIDGE_ERROR(DataError);
DOMAINBRIDGE_ERROR(ConfigError);
DOMAINBRIDGE_ERROR(IoError);
DOMAINBRIDGE_ERROR(NumericalError);
DOMAINBRIDGE_ERROR(SweepError);
DOMAINBRIDGE_ERROR(ReportError);

#undef DOMAINBRIDGE_ERROR

// A pipeline stage failed; the message carries the stage name and the cause.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace domainbridge

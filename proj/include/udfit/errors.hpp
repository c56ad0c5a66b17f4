#pragma once

#include <stdexcept>
#include <string>

namespace udfit {

// Error categories surfaced by the library. The CLI maps them onto exit codes.
enum class ErrorKind {
  kInvalidArgument,
  kOutOfDomain,
  kMissingData,
  kDataInconsistency,
  kUnsupported,
  kDegenerateSpec,
  kUndefinedProbability,
  kNumericalFailure,
  kConfig,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define UDFIT_DEFINE_ERROR(Name, Kind)                              \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(Kind, what) {}   \
  };

UDFIT_DEFINE_ERROR(InvalidArgument, ErrorKind::kInvalidArgument)
UDFIT_DEFINE_ERROR(OutOfDomain, ErrorKind::kOutOfDomain)
UDFIT_DEFINE_ERROR(MissingData, ErrorKind::kMissingData)
UDFIT_DEFINE_ERROR(DataInconsistency, ErrorKind::kDataInconsistency)
UDFIT_DEFINE_ERROR(Unsupported, ErrorKind::kUnsupported)
UDFIT_DEFINE_ERROR(DegenerateSpec, ErrorKind::kDegenerateSpec)
UDFIT_DEFINE_ERROR(UndefinedProbability, ErrorKind::kUndefinedProbability)
UDFIT_DEFINE_ERROR(NumericalFailure, ErrorKind::kNumericalFailure)
UDFIT_DEFINE_ERROR(ConfigError, ErrorKind::kConfig)
UDFIT_DEFINE_ERROR(IoError, ErrorKind::kIo)

#undef UDFIT_DEFINE_ERROR

}  // namespace udfit

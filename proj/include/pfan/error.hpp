#pragma once

#include <stdexcept>
#include <string>

namespace pfan {

/// Base of every error raised by the library. `kind()` is a stable,
/// machine-parsable class name used by the command line front end.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

#define PFAN_DEFINE_ERROR(Name, Tag)                     \
  class Name : public Error {                            \
   public:                                               \
    using Error::Error;                                  \
    const char* kind() const noexcept override { return Tag; } \
  };

PFAN_DEFINE_ERROR(ShapeError, "shape")
PFAN_DEFINE_ERROR(ValueError, "value")
PFAN_DEFINE_ERROR(IoError, "io")
PFAN_DEFINE_ERROR(DecodeError, "decode")
PFAN_DEFINE_ERROR(FormatError, "format")
PFAN_DEFINE_ERROR(ConfigError, "config")
PFAN_DEFINE_ERROR(DatasetError, "dataset")
PFAN_DEFINE_ERROR(ResourceError, "resource")

#undef PFAN_DEFINE_ERROR

}  // namespace pfan

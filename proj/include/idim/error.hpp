// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace idim {

// Base of every error raised by the library. `kind()` is a stable short tag
// used in the one-line CLI diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define IDIM_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(tag, what) {}      \
  }

IDIM_DEFINE_ERROR(InvalidDimensionError, "invalid-dimension");
IDIM_DEFINE_ERROR(CapacityError, "capacity");
IDIM_DEFINE_ERROR(ConfigError, "config");
IDIM_DEFINE_ERROR(NumericError, "numeric");
IDIM_DEFINE_ERROR(DataError, "data");
IDIM_DEFINE_ERROR(BaselineDegenerateError, "baseline-degenerate");
IDIM_DEFINE_ERROR(UndefinedGapError, "undefined-gap");
IDIM_DEFINE_ERROR(FormatError, "format");

#undef IDIM_DEFINE_ERROR

}  // namespace idim

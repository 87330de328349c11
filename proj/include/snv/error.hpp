#pragma once

#include <stdexcept>
#include <string>

namespace snv {

/// Rejected input: non-finite parameters, malformed files, violated preconditions.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical procedure could not produce a trustworthy result.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace snv

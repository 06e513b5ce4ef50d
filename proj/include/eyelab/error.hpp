#pragma once

#include <stdexcept>
#include <string>

namespace eyelab {

// Malformed or inconsistent input data. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
  public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A target could not be evaluated (fewer than 2 positives or 2 negatives
// after visit sampling). Reported per target, mapped to exit code 3.
class InsufficientCasesError : public std::runtime_error {
  public:
    explicit InsufficientCasesError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace eyelab

#pragma once

#include <stdexcept>
#include <string>

namespace dopa {

/// Invalid configuration or parameter regime (maps to CLI exit code 1).
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: ill-conditioning, non-convergence, bracket loss
/// (maps to CLI exit code 2).
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dopa

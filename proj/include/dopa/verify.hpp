#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dopa {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  std::vector<std::string> ops;  ///< operations this check exercises
};

struct VerifyOptions {
  std::size_t cache_rows = 20000;
  long slots = 200000;
  std::uint64_t seed = 1;
  bool inject_fault = false;  ///< perturb a solved table; the residual check must then fail
};

/// Cross-module oracle suite behind the `verify` subcommand. Stochastic
/// tolerances follow the documented schedule: a tolerance quoted at
/// baseline size n0 is scaled by sqrt(n0 / n) for smaller runs.
std::vector<CheckResult> run_verification(const VerifyOptions& opts = {});

/// Names of operations no check exercised (must be empty).
std::vector<std::string> missing_op_coverage(const std::vector<CheckResult>& results);

}  // namespace dopa

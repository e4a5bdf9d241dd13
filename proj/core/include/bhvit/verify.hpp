#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace bhvit {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Property suites backing `verify --suite ...`. Known suites: "bitpack",
/// "quant", "model", "all"; anything else throws ConfigError.
std::vector<CheckResult> run_suite(const std::string& suite, unsigned seed = 7);

/// Pass/fail table; returns true when every check passed.
bool print_report(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace bhvit

#include "occaug/core/error.hpp"

#include <sstream>

namespace occaug {
namespace {

std::string join_violations(const std::vector<std::string>& violations) {
  std::ostringstream out;
  out << "invalid configuration (" << violations.size() << " violation"
      << (violations.size() == 1 ? "" : "s") << ")";
  for (const auto& v : violations) out << "\n  - " << v;
  return out.str();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error(join_violations(violations)), violations_(std::move(violations)) {}

}  // namespace occaug

#include "ude/errors.hpp"

#include <sstream>

namespace ude {

namespace detail {

std::string join_problems(const std::vector<std::string>& problems) {
  if (problems.empty()) return "invalid configuration";
  std::ostringstream os;
  os << "invalid configuration (" << problems.size() << " problem"
     << (problems.size() == 1 ? "" : "s") << "):";
  for (const auto& p : problems) os << "\n  - " << p;
  return os.str();
}

}  // namespace detail

std::string AdapterError::format(const std::string& adapter_id,
                                 const std::vector<RecordIssue>& issues) {
  std::ostringstream os;
  os << "adapter '" << adapter_id << "' failed on " << issues.size() << " record"
     << (issues.size() == 1 ? "" : "s") << ":";
  for (const auto& issue : issues) {
    os << "\n  record " << issue.record_index << ": " << issue.reason;
  }
  return os.str();
}

}  // namespace ude

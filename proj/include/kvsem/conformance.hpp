// Shared report type for protocol conformance checks. A simulator run is
// replayed transaction by transaction against the execution test of the
// consistency model the protocol is meant to provide; every commit that the
// test rejects (or that cannot even be replayed as a legal store update)
// becomes one violation entry.

#pragma once

#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

namespace kvsem {

struct ConformanceViolation {
  std::size_t commit_index = 0;  // position in the run's commit log
  std::string reason;
};

struct ConformanceReport {
  std::vector<ConformanceViolation> violations;
  bool livelock = false;  // the scheduler ran out of fuel before finishing
  std::size_t commits_checked = 0;

  bool ok() const { return violations.empty() && !livelock; }

  std::string str() const {
    std::ostringstream out;
    if (ok()) {
      out << "conformant (" << commits_checked << " commits)";
      return out.str();
    }
    if (livelock) out << "livelock: scheduler fuel exhausted\n";
    for (const auto& v : violations) {
      out << "commit " << v.commit_index << ": " << v.reason << "\n";
    }
    return out.str();
  }
};

}  // namespace kvsem

#include "dgen/error.hpp"

namespace dgen {

const char* to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Data: return "data";
    case ErrorCategory::Transport: return "transport";
    case ErrorCategory::FixtureGap: return "fixture-gap";
    case ErrorCategory::Internal: return "internal";
  }
  return "internal";
}

}  // namespace dgen

#pragma once

#include <stdexcept>
#include <string>

namespace dgen {

// Broad failure classes; the CLI maps each to a distinct exit code.
enum class ErrorCategory {
  Config,
  Data,
  Transport,
  FixtureGap,
  Internal,
};

const char* to_string(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCategory::Config, m) {}
};

struct DataError : Error {
  explicit DataError(const std::string& m) : Error(ErrorCategory::Data, m) {}
};

struct TransportError : Error {
  explicit TransportError(const std::string& m) : Error(ErrorCategory::Transport, m) {}
};

// The provider answered but declined the request. Cached like any response.
struct RefusalError : TransportError {
  explicit RefusalError(const std::string& m) : TransportError(m) {}
};

// Replay backend asked for an exchange the fixture does not contain.
struct FixtureGapError : Error {
  FixtureGapError(const std::string& m, std::string key)
      : Error(ErrorCategory::FixtureGap, m), key_(std::move(key)) {}
  const std::string& cache_key() const { return key_; }

 private:
  std::string key_;
};

}  // namespace dgen

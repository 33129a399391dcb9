#pragma once

#include <stdexcept>
#include <string>

namespace hkq {

// Failure categories surfaced by the library. The CLI maps everything except
// `usage` to exit code 1.
enum class errc {
  parameter_domain,
  empty_set,
  degenerate_input,
  insufficient_data,
  numerical_accuracy,
  configuration,
  format,
  dimension,
  training_failure,
  table_build,
  usage,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::parameter_domain: return "parameter_domain";
    case errc::empty_set: return "empty_set";
    case errc::degenerate_input: return "degenerate_input";
    case errc::insufficient_data: return "insufficient_data";
    case errc::numerical_accuracy: return "numerical_accuracy";
    case errc::configuration: return "configuration";
    case errc::format: return "format";
    case errc::dimension: return "dimension";
    case errc::training_failure: return "training_failure";
    case errc::table_build: return "table_build";
    case errc::usage: return "usage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code), message_(msg) {}
  errc code() const { return code_; }
  // The message without the errc prefix, for rethrowing with added context.
  const std::string& message() const { return message_; }

 private:
  errc code_;
  std::string message_;
};

[[noreturn]] inline void raise(errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, errc code, const std::string& msg) {
  if (!cond) raise(code, msg);
}

}  // namespace hkq

#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aes {

enum class ErrorKind {
  format,         // malformed file contents
  range,          // value outside its admissible interval
  validation,     // input violates a data invariant
  configuration,  // impossible or incomplete setup
  coverage,       // a lookup table lacks a required key
  dimension,      // shape mismatch
  empty_input,    // operation needs at least one element
  io,             // file could not be read or written
  dependency,     // upstream artifact missing or stale
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

// Non-fatal diagnostics. The default sink writes "warning: <msg>" to stderr.
// The sink is invoked under a mutex, so it may be called from worker threads.
using WarningSink = std::function<void(std::string_view)>;

void warn(std::string_view message);
WarningSink set_warning_sink(WarningSink sink);

}  // namespace aes

#include "aes/error.hpp"

#include <iostream>
#include <mutex>

namespace aes {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink_slot() {
  static WarningSink sink = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

}  // namespace

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::format: return "format error";
    case ErrorKind::range: return "range error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::configuration: return "configuration error";
    case ErrorKind::coverage: return "coverage error";
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::empty_input: return "empty input";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::dependency: return "dependency error";
  }
  return "error";
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(to_string(kind)) + ": " + message);
}

void warn(std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (sink_slot()) sink_slot()(message);
}

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(sink_mutex());
  WarningSink previous = std::move(sink_slot());
  sink_slot() = std::move(sink);
  return previous;
}

}  // namespace aes

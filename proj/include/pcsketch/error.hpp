#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pcsketch {

enum class ErrorKind {
  Parse,          // malformed input text or image bytes
  Validation,     // argument outside its documented domain
  StateConflict,  // session call illegal in the current state
  NotFound,
  Degenerate,     // geometry too degenerate for the requested operation
  Io,
  BadMagic,
  Version,
  Truncated,
  Stale,          // index built from a different manifest
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pcsketch

#include "pcsketch/error.hpp"

namespace pcsketch {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::StateConflict: return "state_conflict";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Io: return "io";
    case ErrorKind::BadMagic: return "bad_magic";
    case ErrorKind::Version: return "version";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::Stale: return "stale";
  }
  return "unknown";
}

}  // namespace pcsketch

#pragma once

#include <string>
#include <string_view>

namespace pcsketch {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);

/// Throws Parse on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace pcsketch

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace semcon {

/// Lowercase hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

// 64-bit FNV-1a. Stable across platforms; seeds deterministic patterns.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace semcon

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace protoflow {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// IEEE CRC-32 (zlib polynomial).
std::uint32_t crc32(std::string_view data);

std::string hex32(std::uint32_t value);

std::string base64_encode(std::string_view data);
/// Throws std::invalid_argument on malformed input. Whitespace is ignored.
std::string base64_decode(std::string_view text);

/// Reads a whole file; throws std::runtime_error if it cannot be opened.
std::string read_file(const std::string& path);

} // namespace protoflow

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace protoflow::persist {

class GzipError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string gzip_compress(std::string_view data);
/// Throws GzipError on a damaged or truncated stream.
std::string gzip_decompress(std::string_view data);

} // namespace protoflow::persist

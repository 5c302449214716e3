#include "protoflow/persist/gzip.hpp"

#include <zlib.h>

namespace protoflow::persist {

namespace {

constexpr int kGzipWindow = 15 + 16;  // zlib's "write a gzip header" flag

} // namespace

std::string gzip_compress(std::string_view data) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, kGzipWindow, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw GzipError("deflateInit2 failed");
    }
    std::string out(deflateBound(&zs, static_cast<uLong>(data.size())), '\0');
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw GzipError("deflate did not finish");
    return out;
}

std::string gzip_decompress(std::string_view data) {
    z_stream zs{};
    if (inflateInit2(&zs, kGzipWindow) != Z_OK) throw GzipError("inflateInit2 failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    std::string out;
    char buf[64 * 1024];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = reinterpret_cast<Bytef*>(buf);
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw GzipError(rc == Z_BUF_ERROR ? "truncated gzip stream" : "corrupt gzip stream");
        }
        out.append(buf, sizeof buf - zs.avail_out);
    }
    const bool trailing = zs.avail_in != 0;
    inflateEnd(&zs);
    if (trailing) throw GzipError("trailing bytes after gzip stream");
    return out;
}

} // namespace protoflow::persist

#include "protoflow/gateway/blob_store.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "protoflow/common/hash.hpp"

namespace fs = std::filesystem;

namespace protoflow::gateway {

namespace {

std::optional<std::string> hex_of(const std::string& ref) {
    constexpr std::string_view prefix = "sha256:";
    if (ref.rfind(prefix, 0) != 0 || ref.size() != prefix.size() + 64) return std::nullopt;
    auto hex = ref.substr(prefix.size());
    for (char c : hex) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return std::nullopt;
    }
    return hex;
}

} // namespace

BlobStore::BlobStore(std::string root) : root_(std::move(root)) { fs::create_directories(root_); }

std::string BlobStore::path_for(const std::string& hex) const { return root_ + "/" + hex.substr(0, 2) + "/" + hex; }

std::string BlobStore::put(const std::string& data) {
    const auto hex = sha256_hex(data);
    const auto path = path_for(hex);
    if (!fs::exists(path)) {
        fs::create_directories(fs::path(path).parent_path());
        const auto tmp = path + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out.write(data.data(), static_cast<std::streamsize>(data.size()));
            if (!out) throw std::runtime_error("cannot write blob " + tmp);
        }
        fs::rename(tmp, path);
    }
    return "sha256:" + hex;
}

std::optional<std::string> BlobStore::get(const std::string& ref) const {
    auto hex = hex_of(ref);
    if (!hex || !fs::exists(path_for(*hex))) return std::nullopt;
    return read_file(path_for(*hex));
}

bool BlobStore::contains(const std::string& ref) const {
    auto hex = hex_of(ref);
    return hex && fs::exists(path_for(*hex));
}

} // namespace protoflow::gateway

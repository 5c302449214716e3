#pragma once

#include <optional>
#include <string>

namespace protoflow::gateway {

/// Content-addressed directory: data lands in <root>/<hex[0:2]>/<hex> and is
/// referenced as "sha256:<hex>". Writing the same bytes twice is a no-op.
class BlobStore {
public:
    explicit BlobStore(std::string root);

    std::string put(const std::string& data);
    std::optional<std::string> get(const std::string& ref) const;
    bool contains(const std::string& ref) const;

private:
    std::string path_for(const std::string& hex) const;

    std::string root_;
};

} // namespace protoflow::gateway

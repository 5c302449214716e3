#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

namespace pftest {

struct TempDir {
    std::string path;
    explicit TempDir(const std::string& tag = "pf") {
        static int n = 0;
        namespace fs = std::filesystem;
        path = (fs::temp_directory_path() / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(n++))).string();
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

} // namespace pftest

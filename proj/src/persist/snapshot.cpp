#include "protoflow/persist/snapshot.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>

#include "protoflow/common/hash.hpp"
#include "protoflow/persist/gzip.hpp"

namespace protoflow::persist {

namespace fs = std::filesystem;

namespace {

std::optional<std::uint64_t> snapshot_sequence(const std::string& name) {
    constexpr std::string_view prefix = "snap-", suffix = ".json.gz";
    if (name.size() <= prefix.size() + suffix.size() || name.rfind(prefix, 0) != 0 ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
        return std::nullopt;
    }
    const auto digits = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        return std::nullopt;
    }
    return std::stoull(digits);
}

void sync_path(const std::string& path, int flags) {
    const int fd = ::open(path.c_str(), flags);
    if (fd < 0) throw std::runtime_error("cannot open '" + path + "' to sync");
    const int rc = ::fsync(fd);
    ::close(fd);
    if (rc != 0) throw std::runtime_error("fsync failed for '" + path + "'");
}

} // namespace

SnapshotStore::SnapshotStore(std::string dir, SnapshotPolicy policy) : dir_(std::move(dir)), policy_(policy) {
    if (policy_.interval <= Duration::zero()) throw std::invalid_argument("snapshot interval must be positive");
    if (policy_.retain < 1) throw std::invalid_argument("snapshot retention must be at least 1");
    fs::create_directories(dir_);
}

std::vector<SnapshotInfo> SnapshotStore::list() const {
    std::vector<SnapshotInfo> out;
    for (const auto& e : fs::directory_iterator(dir_)) {
        const auto name = e.path().filename().string();
        if (auto seq = snapshot_sequence(name)) out.push_back({*seq, e.path().string(), e.file_size()});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sequence < b.sequence; });
    return out;
}

SnapshotInfo SnapshotStore::write(nlohmann::json state, Instant taken_at) {
    const auto existing = list();
    const std::uint64_t seq = existing.empty() ? 1 : existing.back().sequence + 1;
    state["sequence"] = seq;
    state["taken_at"] = format_rfc3339(taken_at);
    const auto bytes = gzip_compress(state.dump());

    const auto path = dir_ + "/snap-" + std::to_string(seq) + ".json.gz";
    const auto tmp = path + ".tmp";
    {
        std::FILE* f = std::fopen(tmp.c_str(), "wb");
        if (!f) throw std::runtime_error("cannot create '" + tmp + "'");
        const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size() && std::fflush(f) == 0 &&
                        (!fsync_ || ::fsync(::fileno(f)) == 0);
        std::fclose(f);
        if (!ok) {
            fs::remove(tmp);
            throw std::runtime_error("writing snapshot '" + tmp + "' failed");
        }
    }
    fs::rename(tmp, path);
    if (fsync_) sync_path(dir_, O_RDONLY | O_DIRECTORY);

    auto all = list();
    for (std::size_t i = 0; i + policy_.retain < all.size(); ++i) fs::remove(all[i].path);
    return {seq, path, bytes.size()};
}

nlohmann::json SnapshotStore::load(const std::string& path) const {
    auto state = nlohmann::json::parse(gzip_decompress(read_file(path)));
    if (!state.is_object() || !state.contains("format_version") || !state.contains("sequence")) {
        throw std::runtime_error("'" + path + "' is not a snapshot");
    }
    return state;
}

std::optional<LoadedSnapshot> SnapshotStore::load_latest() const {
    LoadedSnapshot out;
    auto all = list();
    for (auto it = all.rbegin(); it != all.rend(); ++it) {
        try {
            out.state = load(it->path);
            out.info = *it;
            return out;
        } catch (const std::exception& e) {
            out.skipped.push_back(it->path + ": " + e.what());
        }
    }
    if (!out.skipped.empty()) throw std::runtime_error("no readable snapshot: " + out.skipped.front());
    return std::nullopt;
}

SnapshotInfo take_snapshot(runtime::Engine& engine, SnapshotStore& store, AuditLog& log, Instant now) {
    log.flush();
    auto info = store.write(engine.encode(), now);
    engine.mark_snapshot({{"sequence", info.sequence}, {"file", fs::path(info.path).filename().string()}});
    log.flush();
    return info;
}

RecoveryReport recover_engine(runtime::Engine& engine, const SnapshotStore& snapshots, const AuditLog& log,
                              const runtime::PackResolver& packs) {
    RecoveryReport report;
    std::uint64_t from = 1;
    if (auto snap = snapshots.load_latest()) {
        engine.restore(snap->state, packs);
        from = snap->state.at("counters").at("next_seq").get<std::uint64_t>();
        report.snapshot = snap->info;
        report.skipped_snapshots = snap->skipped;
    }
    auto all = log.read_from(1);
    std::vector<runtime::AuditRecord> history, tail;
    for (auto& r : all) (r.seq < from ? history : tail).push_back(std::move(r));
    report.history = history.size();
    report.replayed = tail.size();
    engine.load_history(std::move(history));
    engine.recover(tail, packs);
    return report;
}

} // namespace protoflow::persist

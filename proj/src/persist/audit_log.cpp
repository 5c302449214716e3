#include "protoflow/persist/audit_log.hpp"

#include <unistd.h>

#include <algorithm>
#include <filesystem>

#include "protoflow/common/hash.hpp"

namespace protoflow::persist {

namespace fs = std::filesystem;
using runtime::AuditRecord;

namespace {

std::string segment_name(std::uint64_t n) { return "segment-" + std::to_string(n) + ".log"; }

std::optional<std::uint64_t> segment_number(const std::string& name) {
    constexpr std::string_view prefix = "segment-", suffix = ".log";
    if (name.size() <= prefix.size() + suffix.size() || name.rfind(prefix, 0) != 0 ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
        return std::nullopt;
    }
    const auto digits = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    return std::stoull(digits);
}

std::vector<std::pair<std::uint64_t, std::string>> list_segments(const std::string& dir) {
    std::vector<std::pair<std::uint64_t, std::string>> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (auto n = segment_number(name)) out.emplace_back(*n, name);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string describe(const std::vector<ChecksumFailure>& fs) {
    std::string s = "audit log is damaged:";
    for (const auto& f : fs) s += " " + f.segment + ":" + std::to_string(f.line) + " (" + f.reason + ")";
    return s;
}

} // namespace

AuditCorruption::AuditCorruption(std::vector<ChecksumFailure> failures)
    : std::runtime_error(describe(failures)), failures_(std::move(failures)) {}

AuditLog::AuditLog(std::string dir, std::uint64_t segment_bytes) : dir_(std::move(dir)), segment_bytes_(segment_bytes) {
    fs::create_directories(dir_);
    const auto segs = list_segments(dir_);
    if (segs.empty()) {
        open_segment(1);
        return;
    }
    std::vector<ChecksumFailure> ignored;
    scan(dir_, [&](AuditRecord&& r) { last_seq_ = std::max(last_seq_, r.seq); }, ignored, 0);
    // A torn final line is left untouched for reads to report; appends
    // move on to a fresh segment.
    const auto text = read_file(dir_ + "/" + segs.back().second);
    const bool torn = !text.empty() && text.back() != '\n';
    open_segment(segs.back().first + (torn ? 1 : 0));
}

AuditLog::~AuditLog() {
    if (file_) {
        std::fflush(file_);
        if (fsync_) ::fsync(::fileno(file_));
        std::fclose(file_);
    }
}

void AuditLog::open_segment(std::uint64_t n) {
    if (file_) {
        std::fflush(file_);
        if (fsync_) ::fsync(::fileno(file_));
        std::fclose(file_);
    }
    const auto path = dir_ + "/" + segment_name(n);
    file_ = std::fopen(path.c_str(), "ab");
    if (!file_) throw std::runtime_error("cannot open audit segment '" + path + "'");
    segment_ = n;
    size_ = fs::file_size(path);
}

std::string AuditLog::encode_line(const AuditRecord& r) {
    const auto body = runtime::canonical(r);
    return hex32(crc32(body)) + " " + body + "\n";
}

void AuditLog::append(const AuditRecord& r) {
    std::lock_guard lock(mu_);
    if (r.seq <= last_seq_) {
        throw std::logic_error("audit seq " + std::to_string(r.seq) + " does not follow " + std::to_string(last_seq_));
    }
    const auto line = encode_line(r);
    if (size_ > 0 && size_ + line.size() > segment_bytes_) open_segment(segment_ + 1);
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size()) {
        throw std::runtime_error("audit append failed in " + segment_name(segment_));
    }
    size_ += line.size();
    last_seq_ = r.seq;
}

void AuditLog::flush() {
    std::lock_guard lock(mu_);
    if (std::fflush(file_) != 0 || (fsync_ && ::fsync(::fileno(file_)) != 0)) {
        throw std::runtime_error("audit flush failed in " + segment_name(segment_));
    }
}

void AuditLog::scan(const std::string& dir, const std::function<void(AuditRecord&&)>& each,
                    std::vector<ChecksumFailure>& failures, std::uint64_t from) {
    std::uint64_t prev = 0;
    for (const auto& [n, name] : list_segments(dir)) {
        const auto text = read_file(dir + "/" + name);
        std::size_t pos = 0, lineno = 0;
        while (pos < text.size()) {
            auto end = text.find('\n', pos);
            const bool torn = end == std::string::npos;
            if (torn) end = text.size();
            std::string_view line(text.data() + pos, end - pos);
            pos = end + 1;
            ++lineno;
            if (line.empty()) continue;
            auto fail = [&](std::string reason) { failures.push_back({name, lineno, std::move(reason)}); };
            if (line.size() < 10 || line[8] != ' ') {
                fail(torn ? "truncated record" : "malformed record");
                continue;
            }
            const auto body = line.substr(9);
            if (hex32(crc32(body)) != line.substr(0, 8)) {
                fail(torn ? "truncated record" : "checksum mismatch");
                continue;
            }
            AuditRecord r;
            try {
                r = runtime::audit_from_json(nlohmann::json::parse(body));
            } catch (const std::exception& e) {
                fail(std::string("unreadable record: ") + e.what());
                continue;
            }
            if (r.seq <= prev) {
                fail("seq " + std::to_string(r.seq) + " out of order");
                continue;
            }
            prev = r.seq;
            if (r.seq >= from) each(std::move(r));
        }
    }
}

AuditReadResult AuditLog::read(const runtime::AuditFilter& f) const {
    std::lock_guard lock(mu_);
    if (file_) std::fflush(file_);
    AuditReadResult out;
    scan(
        dir_, [&](AuditRecord&& r) {
            if (f.matches(r)) out.records.push_back(std::move(r));
        },
        out.failures, 0);
    return out;
}

std::vector<AuditRecord> AuditLog::read_from(std::uint64_t from) const {
    std::lock_guard lock(mu_);
    if (file_) std::fflush(file_);
    std::vector<AuditRecord> out;
    std::vector<ChecksumFailure> failures;
    scan(dir_, [&](AuditRecord&& r) { out.push_back(std::move(r)); }, failures, from);
    if (!failures.empty()) throw AuditCorruption(std::move(failures));
    return out;
}

std::vector<AuditRecord> AuditLog::read_dir(const std::string& dir) {
    std::vector<AuditRecord> out;
    std::vector<ChecksumFailure> failures;
    scan(dir, [&](AuditRecord&& r) { out.push_back(std::move(r)); }, failures, 0);
    if (!failures.empty()) throw AuditCorruption(std::move(failures));
    return out;
}

std::vector<std::string> AuditLog::segments() const {
    std::vector<std::string> out;
    for (auto& [_, name] : list_segments(dir_)) out.push_back(name);
    return out;
}

std::uint64_t AuditLog::last_seq() const {
    std::lock_guard lock(mu_);
    return last_seq_;
}

} // namespace protoflow::persist

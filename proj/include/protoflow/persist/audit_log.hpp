#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "protoflow/runtime/audit.hpp"

namespace protoflow::persist {

struct ChecksumFailure {
    std::string segment;  // file name
    std::size_t line = 0;
    std::string reason;
};

/// A damaged audit log. Recovery refuses to continue past one rather than
/// silently dropping records.
class AuditCorruption : public std::runtime_error {
public:
    AuditCorruption(std::vector<ChecksumFailure> failures);
    const std::vector<ChecksumFailure>& failures() const { return failures_; }

private:
    std::vector<ChecksumFailure> failures_;
};

struct AuditReadResult {
    std::vector<runtime::AuditRecord> records;  // seq order
    std::vector<ChecksumFailure> failures;
};

/// Newline-delimited audit records under `<dir>/segment-<n>.log`, one per
/// line as `<crc32 hex> <json>`. A new segment starts once the current one
/// would pass `segment_bytes`. Appends are buffered until flush(), which
/// also fsyncs; the engine host flushes after every batch of work.
class AuditLog final : public runtime::AuditSink {
public:
    static constexpr std::uint64_t kSegmentBytes = 64ull << 20;

    explicit AuditLog(std::string dir, std::uint64_t segment_bytes = kSegmentBytes);
    ~AuditLog() override;
    AuditLog(const AuditLog&) = delete;
    AuditLog& operator=(const AuditLog&) = delete;

    /// Throws std::logic_error unless seq follows the last appended record.
    void append(const runtime::AuditRecord& r) override;
    void flush() override;
    /// Off: flush() stops at the OS buffers. Survives a process crash, not a power loss.
    void set_fsync(bool on) { fsync_ = on; }

    AuditReadResult read(const runtime::AuditFilter& f = {}) const;
    /// Records with seq >= from; throws AuditCorruption on any damaged line.
    std::vector<runtime::AuditRecord> read_from(std::uint64_t from) const;

    /// Every record under `dir` without opening it for appends. Throws AuditCorruption.
    static std::vector<runtime::AuditRecord> read_dir(const std::string& dir);

    std::vector<std::string> segments() const;  // file names, oldest first
    std::uint64_t last_seq() const;

    static std::string encode_line(const runtime::AuditRecord& r);

private:
    void open_segment(std::uint64_t n);
    static void scan(const std::string& dir, const std::function<void(runtime::AuditRecord&&)>& each,
                     std::vector<ChecksumFailure>& failures, std::uint64_t from);

    std::string dir_;
    std::uint64_t segment_bytes_;
    mutable std::mutex mu_;
    std::FILE* file_ = nullptr;
    std::uint64_t segment_ = 0;
    std::uint64_t size_ = 0;
    std::uint64_t last_seq_ = 0;
    bool fsync_ = true;
};

} // namespace protoflow::persist

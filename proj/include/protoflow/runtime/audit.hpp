#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "protoflow/common/time.hpp"

namespace protoflow::runtime {

enum class AuditKind {
    registration,
    message_in,
    message_out,
    transition,
    rejection,
    manual,
    notification,
    snapshot_marker,
    timer,
    tool_call,
    metric,
    admin,
};

std::string_view to_string(AuditKind k);
std::optional<AuditKind> parse_audit_kind(std::string_view s);

/// Records that carry an external input. Crash recovery re-executes these and
/// checks that everything else comes out identical.
bool is_input(AuditKind k);

struct AuditRecord {
    std::uint64_t seq = 0;
    std::string participant_id;  // empty for engine-wide records
    Instant timestamp{};
    AuditKind kind = AuditKind::admin;
    nlohmann::json detail = nlohmann::json::object();

    bool operator==(const AuditRecord& o) const;
};

nlohmann::json to_json(const AuditRecord& r);
AuditRecord audit_from_json(const nlohmann::json& j);

/// Sorted keys, no whitespace.
std::string canonical(const AuditRecord& r);

/// Durable destination for audit records, written in seq order.
class AuditSink {
public:
    virtual ~AuditSink() = default;
    virtual void append(const AuditRecord& r) = 0;
    virtual void flush() {}
};

struct AuditFilter {
    std::optional<std::string> participant_id;
    std::optional<Instant> from;  // inclusive
    std::optional<Instant> to;    // inclusive
    std::optional<AuditKind> kind;

    bool matches(const AuditRecord& r) const;
};

} // namespace protoflow::runtime

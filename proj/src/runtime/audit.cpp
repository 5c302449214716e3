#include "protoflow/runtime/audit.hpp"

#include <array>
#include <stdexcept>

namespace protoflow::runtime {

namespace {

constexpr std::array<std::pair<AuditKind, std::string_view>, 12> kKinds{{
    {AuditKind::registration, "registration"},
    {AuditKind::message_in, "message_in"},
    {AuditKind::message_out, "message_out"},
    {AuditKind::transition, "transition"},
    {AuditKind::rejection, "rejection"},
    {AuditKind::manual, "manual"},
    {AuditKind::notification, "notification"},
    {AuditKind::snapshot_marker, "snapshot_marker"},
    {AuditKind::timer, "timer"},
    {AuditKind::tool_call, "tool_call"},
    {AuditKind::metric, "metric"},
    {AuditKind::admin, "admin"},
}};

} // namespace

std::string_view to_string(AuditKind k) {
    for (const auto& [kind, name] : kKinds) {
        if (kind == k) return name;
    }
    return "?";
}

std::optional<AuditKind> parse_audit_kind(std::string_view s) {
    for (const auto& [kind, name] : kKinds) {
        if (name == s) return kind;
    }
    return std::nullopt;
}

bool is_input(AuditKind k) {
    switch (k) {
    case AuditKind::registration:
    case AuditKind::message_in:
    case AuditKind::manual:
    case AuditKind::admin:
    case AuditKind::snapshot_marker: return true;
    default: return false;
    }
}

bool AuditRecord::operator==(const AuditRecord& o) const { return canonical(*this) == canonical(o); }

nlohmann::json to_json(const AuditRecord& r) {
    return {{"seq", r.seq},
            {"participant_id", r.participant_id},
            {"timestamp", format_rfc3339(r.timestamp)},
            {"kind", to_string(r.kind)},
            {"detail", r.detail}};
}

AuditRecord audit_from_json(const nlohmann::json& j) {
    AuditRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.participant_id = j.at("participant_id").get<std::string>();
    r.timestamp = parse_rfc3339(j.at("timestamp").get<std::string>());
    const auto kind = j.at("kind").get<std::string>();
    auto k = parse_audit_kind(kind);
    if (!k) throw std::invalid_argument("unknown audit kind '" + kind + "'");
    r.kind = *k;
    r.detail = j.at("detail");
    return r;
}

std::string canonical(const AuditRecord& r) { return to_json(r).dump(); }

bool AuditFilter::matches(const AuditRecord& r) const {
    if (participant_id && r.participant_id != *participant_id) return false;
    if (from && r.timestamp < *from) return false;
    if (to && r.timestamp > *to) return false;
    if (kind && r.kind != *kind) return false;
    return true;
}

} // namespace protoflow::runtime

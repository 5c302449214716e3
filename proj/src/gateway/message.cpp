#include "protoflow/gateway/message.hpp"

namespace protoflow::gateway {

std::optional<AddressKind> classify_address(std::string_view a) {
    if (is_chat_address(a)) {
        if (a.size() == 5 || a.size() > 133) return std::nullopt;
        for (char c : a.substr(5)) {
            const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                            c == '_' || c == '.';
            if (!ok) return std::nullopt;
        }
        return AddressKind::chat;
    }
    if (a.size() < 3 || a.size() > 16 || a[0] != '+' || a[1] == '0') return std::nullopt;
    for (char c : a.substr(1)) {
        if (c < '0' || c > '9') return std::nullopt;
    }
    return AddressKind::phone;
}

nlohmann::json to_json(const Attachment& a) {
    return {{"media_type", a.media_type}, {"size", a.size}, {"storage_ref", a.storage_ref}};
}

Attachment attachment_from_json(const nlohmann::json& j) {
    return {j.at("media_type").get<std::string>(), j.at("size").get<std::uint64_t>(),
            j.at("storage_ref").get<std::string>()};
}

nlohmann::json to_json(const InboundMessage& m) {
    auto atts = nlohmann::json::array();
    for (const auto& a : m.attachments) atts.push_back(to_json(a));
    return {{"message_id", m.message_id},
            {"from", m.from_address},
            {"body", m.body},
            {"attachments", std::move(atts)},
            {"received_at", format_rfc3339(m.received_at)}};
}

InboundMessage inbound_from_json(const nlohmann::json& j) {
    InboundMessage m;
    m.message_id = j.at("message_id").get<std::string>();
    m.from_address = j.at("from").get<std::string>();
    m.body = j.at("body").get<std::string>();
    for (const auto& a : j.at("attachments")) m.attachments.push_back(attachment_from_json(a));
    m.received_at = parse_rfc3339(j.at("received_at").get<std::string>());
    return m;
}

nlohmann::json to_json(const OutboundMessage& m) {
    return {{"message_id", m.message_id},
            {"participant_id", m.participant_id},
            {"to", m.to_address},
            {"body", m.body},
            {"created_at", format_rfc3339(m.created_at)},
            {"sent_at", m.sent_at ? nlohmann::json(format_rfc3339(*m.sent_at)) : nlohmann::json()},
            {"send_attempts", m.send_attempts},
            {"sender", m.sender}};
}

OutboundMessage outbound_from_json(const nlohmann::json& j) {
    OutboundMessage m;
    m.message_id = j.at("message_id").get<std::string>();
    m.participant_id = j.at("participant_id").get<std::string>();
    m.to_address = j.at("to").get<std::string>();
    m.body = j.at("body").get<std::string>();
    m.created_at = parse_rfc3339(j.at("created_at").get<std::string>());
    if (const auto& s = j.at("sent_at"); !s.is_null()) m.sent_at = parse_rfc3339(s.get<std::string>());
    m.send_attempts = j.at("send_attempts").get<int>();
    m.sender = j.at("sender").get<std::string>();
    return m;
}

} // namespace protoflow::gateway

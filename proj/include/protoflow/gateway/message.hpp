#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoflow/common/time.hpp"

namespace protoflow::gateway {

struct Attachment {
    std::string media_type;
    std::uint64_t size = 0;
    std::string storage_ref;  // "sha256:<hex>" for stored blobs, else the provider URL

    bool operator==(const Attachment&) const = default;
};

struct InboundMessage {
    std::string message_id;
    std::string from_address;
    std::string body;
    std::vector<Attachment> attachments;
    Instant received_at{};

    bool operator==(const InboundMessage&) const = default;
};

struct OutboundMessage {
    std::string message_id;
    std::string participant_id;  // empty for staff notifications
    std::string to_address;
    std::string body;
    Instant created_at{};
    std::optional<Instant> sent_at;
    int send_attempts = 0;
    std::string sender;  // pool number used by the last attempt; "web" for chat

    bool operator==(const OutboundMessage&) const = default;
};

enum class AddressKind { phone, chat };

/// "+<E.164 digits>" or "chat:<session id>"; nullopt when neither.
std::optional<AddressKind> classify_address(std::string_view address);
inline bool is_chat_address(std::string_view a) { return a.rfind("chat:", 0) == 0; }

nlohmann::json to_json(const Attachment& a);
nlohmann::json to_json(const InboundMessage& m);
nlohmann::json to_json(const OutboundMessage& m);
Attachment attachment_from_json(const nlohmann::json& j);
InboundMessage inbound_from_json(const nlohmann::json& j);
OutboundMessage outbound_from_json(const nlohmann::json& j);

} // namespace protoflow::gateway

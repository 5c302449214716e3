#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "protoflow/gateway/message.hpp"

namespace protoflow::gateway {

enum class Direction { inbound, outbound };

/// One persisted message either way. Dead letters are inbound messages that
/// could not be routed to a participant.
struct StoredMessage {
    Direction direction = Direction::inbound;
    std::string message_id;
    std::string participant_id;
    std::string address;  // sender for inbound, recipient for outbound
    std::string body;
    std::vector<Attachment> attachments;
    Instant timestamp{};  // received_at / created_at
    std::optional<Instant> sent_at;
    int send_attempts = 0;
    bool dead_letter = false;

    bool operator==(const StoredMessage&) const = default;
};

StoredMessage stored(const InboundMessage& m, std::string participant_id, bool dead_letter = false);
StoredMessage stored(const OutboundMessage& m);

nlohmann::json to_json(const StoredMessage& m);
StoredMessage stored_from_json(const nlohmann::json& j);

/// Every present field must match; the time range is inclusive.
struct MessageFilter {
    std::optional<std::string> participant_id;
    std::optional<std::string> address;
    std::optional<Direction> direction;
    std::optional<Instant> from;
    std::optional<Instant> to;
    std::optional<bool> dead_letter;

    bool matches(const StoredMessage& m) const;
};

class StorageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Upserts by message_id; loads return insertion order of first write.
class MessageStore {
public:
    virtual ~MessageStore() = default;
    virtual void put(const StoredMessage& m) = 0;
    virtual std::vector<StoredMessage> load(const MessageFilter& filter) const = 0;
    virtual std::size_t size() const = 0;
};

class MemoryMessageStore : public MessageStore {
public:
    void put(const StoredMessage& m) override;
    std::vector<StoredMessage> load(const MessageFilter& filter) const override;
    std::size_t size() const override;

protected:
    mutable std::mutex mu_;
    std::vector<StoredMessage> rows_;
    std::map<std::string, std::size_t> index_;
};

/// Memory store backed by an append-only JSON-lines file; later lines for
/// the same message_id supersede earlier ones.
class JsonlMessageStore final : public MemoryMessageStore {
public:
    explicit JsonlMessageStore(std::string path);
    void put(const StoredMessage& m) override;

private:
    std::string path_;
};

} // namespace protoflow::gateway

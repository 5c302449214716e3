#include "protoflow/gateway/message_store.hpp"

#include <filesystem>
#include <fstream>

namespace protoflow::gateway {

StoredMessage stored(const InboundMessage& m, std::string participant_id, bool dead_letter) {
    StoredMessage s;
    s.direction = Direction::inbound;
    s.message_id = m.message_id;
    s.participant_id = std::move(participant_id);
    s.address = m.from_address;
    s.body = m.body;
    s.attachments = m.attachments;
    s.timestamp = m.received_at;
    s.dead_letter = dead_letter;
    return s;
}

StoredMessage stored(const OutboundMessage& m) {
    StoredMessage s;
    s.direction = Direction::outbound;
    s.message_id = m.message_id;
    s.participant_id = m.participant_id;
    s.address = m.to_address;
    s.body = m.body;
    s.timestamp = m.created_at;
    s.sent_at = m.sent_at;
    s.send_attempts = m.send_attempts;
    return s;
}

nlohmann::json to_json(const StoredMessage& m) {
    auto atts = nlohmann::json::array();
    for (const auto& a : m.attachments) atts.push_back(to_json(a));
    return {{"direction", m.direction == Direction::inbound ? "in" : "out"},
            {"message_id", m.message_id},
            {"participant_id", m.participant_id},
            {"address", m.address},
            {"body", m.body},
            {"attachments", std::move(atts)},
            {"timestamp", format_rfc3339(m.timestamp)},
            {"sent_at", m.sent_at ? nlohmann::json(format_rfc3339(*m.sent_at)) : nlohmann::json()},
            {"send_attempts", m.send_attempts},
            {"dead_letter", m.dead_letter}};
}

StoredMessage stored_from_json(const nlohmann::json& j) {
    StoredMessage m;
    m.direction = j.at("direction").get<std::string>() == "in" ? Direction::inbound : Direction::outbound;
    m.message_id = j.at("message_id").get<std::string>();
    m.participant_id = j.at("participant_id").get<std::string>();
    m.address = j.at("address").get<std::string>();
    m.body = j.at("body").get<std::string>();
    for (const auto& a : j.at("attachments")) m.attachments.push_back(attachment_from_json(a));
    m.timestamp = parse_rfc3339(j.at("timestamp").get<std::string>());
    if (const auto& s = j.at("sent_at"); !s.is_null()) m.sent_at = parse_rfc3339(s.get<std::string>());
    m.send_attempts = j.at("send_attempts").get<int>();
    m.dead_letter = j.at("dead_letter").get<bool>();
    return m;
}

bool MessageFilter::matches(const StoredMessage& m) const {
    if (participant_id && m.participant_id != *participant_id) return false;
    if (address && m.address != *address) return false;
    if (direction && m.direction != *direction) return false;
    if (from && m.timestamp < *from) return false;
    if (to && m.timestamp > *to) return false;
    if (dead_letter && m.dead_letter != *dead_letter) return false;
    return true;
}

void MemoryMessageStore::put(const StoredMessage& m) {
    std::lock_guard lock(mu_);
    if (auto it = index_.find(m.message_id); it != index_.end()) {
        rows_[it->second] = m;
    } else {
        index_.emplace(m.message_id, rows_.size());
        rows_.push_back(m);
    }
}

std::vector<StoredMessage> MemoryMessageStore::load(const MessageFilter& filter) const {
    std::lock_guard lock(mu_);
    std::vector<StoredMessage> out;
    for (const auto& r : rows_) {
        if (filter.matches(r)) out.push_back(r);
    }
    return out;
}

std::size_t MemoryMessageStore::size() const {
    std::lock_guard lock(mu_);
    return rows_.size();
}

JsonlMessageStore::JsonlMessageStore(std::string path) : path_(std::move(path)) {
    const auto parent = std::filesystem::path(path_).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ifstream in(path_);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            MemoryMessageStore::put(stored_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw StorageError(path_ + ":" + std::to_string(n) + ": " + e.what());
        }
    }
}

void JsonlMessageStore::put(const StoredMessage& m) {
    {
        std::lock_guard lock(mu_);
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        if (!out) throw StorageError("cannot append to " + path_);
        out << to_json(m).dump() << '\n';
        out.flush();
        if (!out) throw StorageError("write failed on " + path_);
    }
    MemoryMessageStore::put(m);
}

} // namespace protoflow::gateway

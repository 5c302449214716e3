#include "protoflow/gateway/provider.hpp"

#include <cstdlib>

#include "protoflow/common/hash.hpp"
#include "protoflow/common/http.hpp"
#include "protoflow/gateway/blob_store.hpp"

namespace protoflow::gateway {

SendResult SimGateway::send(const OutboundMessage& m, Instant now) {
    std::lock_guard lock(mu_);
    ++attempts_;
    if (fail_next_ > 0) {
        --fail_next_;
        return {false, "injected failure"};
    }
    if (failure_rate_ > 0 && std::uniform_real_distribution<double>(0, 1)(rng_) < failure_rate_) {
        return {false, "injected random failure"};
    }
    sent_.push_back({m, now});
    return {};
}

void SimGateway::fail_next(int n) {
    std::lock_guard lock(mu_);
    fail_next_ = n;
}

void SimGateway::set_failure_rate(double p, std::uint64_t seed) {
    std::lock_guard lock(mu_);
    failure_rate_ = p;
    rng_.seed(seed);
}

std::vector<SentRecord> SimGateway::sent() const {
    std::lock_guard lock(mu_);
    return sent_;
}

std::vector<SentRecord> SimGateway::sent_to(const std::string& address) const {
    std::lock_guard lock(mu_);
    std::vector<SentRecord> out;
    for (const auto& r : sent_) {
        if (r.message.to_address == address) out.push_back(r);
    }
    return out;
}

std::size_t SimGateway::attempts() const {
    std::lock_guard lock(mu_);
    return attempts_;
}

void SimGateway::clear() {
    std::lock_guard lock(mu_);
    sent_.clear();
    attempts_ = 0;
}

std::vector<std::string> split_numbers(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        const auto b = cur.find_first_not_of(" \t");
        const auto e = cur.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
        cur.clear();
    };
    for (char c : csv) {
        if (c == ',') flush();
        else cur += c;
    }
    flush();
    return out;
}

std::optional<HttpProviderConfig> HttpProviderConfig::from_env() {
    auto env = [](const char* k) {
        const char* v = std::getenv(k);
        return v ? std::string(v) : std::string();
    };
    HttpProviderConfig c;
    c.account = env("PF_SMS_ACCOUNT");
    c.token = env("PF_SMS_TOKEN");
    c.numbers = split_numbers(env("PF_SMS_NUMBERS"));
    c.endpoint = env("PF_SMS_ENDPOINT");
    if (c.account.empty() || c.token.empty() || c.numbers.empty()) return std::nullopt;
    if (c.endpoint.empty()) c.endpoint = "https://api.twilio.com/2010-04-01/Accounts/" + c.account + "/Messages.json";
    return c;
}

SendResult HttpProvider::send(const OutboundMessage& m, Instant) {
    const std::string form = "To=" + url_encode(m.to_address) + "&From=" + url_encode(m.sender) +
                             "&Body=" + url_encode(m.body);
    const auto auth = "Basic " + base64_encode(cfg_.account + ":" + cfg_.token);
    auto res = http_post(cfg_.endpoint, {{"Authorization", auth}}, form, "application/x-www-form-urlencoded");
    if (res.status >= 200 && res.status < 300) return {};
    if (res.status == 0) return {false, res.error};
    return {false, "provider returned HTTP " + std::to_string(res.status)};
}

namespace {

std::map<std::string, std::string> parse_form(const std::string& body) {
    std::map<std::string, std::string> out;
    std::size_t pos = 0;
    while (pos <= body.size()) {
        auto amp = body.find('&', pos);
        if (amp == std::string::npos) amp = body.size();
        const auto pair = body.substr(pos, amp - pos);
        if (!pair.empty()) {
            const auto eq = pair.find('=');
            const auto k = url_decode(pair.substr(0, eq));
            const auto v = eq == std::string::npos ? std::string() : url_decode(pair.substr(eq + 1));
            out[k] = v;
        }
        pos = amp + 1;
    }
    return out;
}

std::string first_of(const std::map<std::string, std::string>& m, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        if (auto it = m.find(k); it != m.end()) return it->second;
    }
    return {};
}

} // namespace

InboundMessage accept_inbound(const RawInbound& raw, BlobStore* blobs, Instant now) {
    InboundMessage m;
    m.from_address = raw.from;
    m.body = raw.body;
    m.received_at = raw.timestamp.value_or(now);
    for (const auto& media : raw.media) {
        Attachment a;
        a.media_type = media.media_type;
        if (!media.data.empty() && blobs) {
            a.storage_ref = blobs->put(media.data);
            a.size = media.data.size();
        } else {
            a.storage_ref = media.url;
            a.size = media.size;
        }
        m.attachments.push_back(std::move(a));
    }
    return m;
}

RawInbound parse_webhook(const std::string& content_type, const std::string& body) {
    RawInbound raw;
    if (content_type.find("json") != std::string::npos) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument(std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object() || !j.contains("from") || !j["from"].is_string()) {
            throw std::invalid_argument("webhook payload needs a string 'from'");
        }
        raw.from = j["from"].get<std::string>();
        raw.body = j.value("body", std::string());
        if (j.contains("media")) {
            for (const auto& mj : j["media"]) {
                RawMedia m;
                m.media_type = mj.value("content_type", mj.value("media_type", std::string("application/octet-stream")));
                m.url = mj.value("url", std::string());
                if (mj.contains("data_base64")) m.data = base64_decode(mj["data_base64"].get<std::string>());
                m.size = mj.contains("size") ? mj["size"].get<std::uint64_t>() : m.data.size();
                raw.media.push_back(std::move(m));
            }
        }
        if (j.contains("timestamp") && j["timestamp"].is_string()) {
            raw.timestamp = parse_rfc3339(j["timestamp"].get<std::string>());
        }
        return raw;
    }
    const auto form = parse_form(body);
    raw.from = first_of(form, {"from", "From"});
    if (raw.from.empty()) throw std::invalid_argument("webhook payload needs 'from'");
    raw.body = first_of(form, {"body", "Body"});
    const auto num = first_of(form, {"NumMedia", "num_media"});
    const int n = num.empty() ? 0 : std::stoi(num);
    for (int i = 0; i < n; ++i) {
        RawMedia m;
        m.url = first_of(form, {("MediaUrl" + std::to_string(i)).c_str()});
        m.media_type = first_of(form, {("MediaContentType" + std::to_string(i)).c_str()});
        if (m.media_type.empty()) m.media_type = "application/octet-stream";
        raw.media.push_back(std::move(m));
    }
    if (auto ts = first_of(form, {"timestamp"}); !ts.empty()) raw.timestamp = parse_rfc3339(ts);
    return raw;
}

} // namespace protoflow::gateway

#include "protoflow/admin/config.hpp"

#include <filesystem>

#include "protoflow/common/text_config.hpp"

namespace protoflow::admin {

namespace fs = std::filesystem;

namespace {

std::string resolve(const std::string& base, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(base) / p).lexically_normal().string();
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

} // namespace

AdminConfig AdminConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
    AdminConfig c;
    try {
        c.studies_dir = resolve(base_dir, get_or<std::string>(j, "studies_dir", c.studies_dir));
        c.data_dir = resolve(base_dir, get_or<std::string>(j, "data_dir", c.data_dir));
        c.staff = get_or<std::vector<std::string>>(j, "staff", {});
        const auto server = j.value("server", nlohmann::json::object());
        c.bind = get_or<std::string>(server, "bind", c.bind);
        c.port = get_or<int>(server, "port", c.port);
        c.tick_ms = get_or<int>(server, "tick_ms", c.tick_ms);
        c.static_dir = resolve(base_dir, get_or<std::string>(server, "static_dir", ""));
        const auto tokens = j.value("tokens", nlohmann::json::object());
        for (const auto& [name, token] : tokens.items()) {
            const auto t = token.get<std::string>();
            if (t.size() < 16) throw std::invalid_argument("token for '" + name + "' is shorter than 16 characters");
            if (!c.tokens.emplace(t, name).second) throw std::invalid_argument("token for '" + name + "' is reused");
        }
        const auto snap = j.value("snapshot", nlohmann::json::object());
        c.snapshot.interval = std::chrono::minutes(get_or<int>(snap, "interval_minutes", 15));
        c.snapshot.retain = get_or<int>(snap, "retain", 8);
        const auto gw = j.value("gateway", nlohmann::json::object());
        const auto mode = get_or<std::string>(gw, "mode", "sim");
        if (mode == "sim") {
            c.gateway_mode = GatewayMode::sim;
        } else if (mode == "http") {
            c.gateway_mode = GatewayMode::http;
        } else {
            throw std::invalid_argument("gateway mode must be \"sim\" or \"http\", not \"" + mode + "\"");
        }
        c.pool.numbers = get_or<std::vector<std::string>>(gw, "numbers", {});
        c.pool.per_number_outgoing_limit = get_or<int>(gw, "outgoing_limit", 100);
        c.pool.per_number_incoming_limit = get_or<int>(gw, "incoming_limit", 500);
        c.webhook_token = get_or<std::string>(gw, "webhook_token", "");
        const auto llm = j.value("llm", nlohmann::json::object());
        c.llm_endpoint = get_or<std::string>(llm, "endpoint", "");
        c.llm_model = get_or<std::string>(llm, "model", "");
        c.emr_file = resolve(base_dir, get_or<std::string>(j.value("emr", nlohmann::json::object()), "file", ""));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad config value: ") + e.what());
    }
    if (c.snapshot.interval <= Duration::zero()) throw std::invalid_argument("snapshot interval must be positive");
    if (c.snapshot.retain < 1) throw std::invalid_argument("snapshot retain must be at least 1");
    if (c.tick_ms < 1) throw std::invalid_argument("tick_ms must be positive");
    return c;
}

AdminConfig AdminConfig::load(const std::string& path) {
    return from_json(load_text_config(path), fs::path(path).parent_path().string());
}

} // namespace protoflow::admin

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoflow/gateway/rate_limiter.hpp"
#include "protoflow/persist/snapshot.hpp"

namespace protoflow::admin {

enum class GatewayMode { sim, http };

/// Server configuration, read from the TOML-like text format:
///
///   studies_dir = "packs"        # one protocol pack per subdirectory
///   data_dir = "data"            # audit, snapshots, messages, blobs
///   staff = ["+15550000000"]     # told about dead letters and storage trouble
///   [server]   bind, port, tick_ms, static_dir
///   [tokens]   <researcher> = "<bearer token>"
///   [snapshot] interval_minutes, retain
///   [gateway]  mode = "sim" | "http", numbers, outgoing_limit, incoming_limit, webhook_token
///   [llm]      endpoint, model      (scripted backend when absent)
///   [emr]      file
struct AdminConfig {
    std::string studies_dir = "packs";
    std::string data_dir = "data";
    std::vector<std::string> staff;
    std::string bind = "127.0.0.1";
    int port = 8080;
    int tick_ms = 1000;
    std::string static_dir;  // built console assets, served under /console/
    std::map<std::string, std::string> tokens;  // token -> researcher
    persist::SnapshotPolicy snapshot;
    GatewayMode gateway_mode = GatewayMode::sim;
    gateway::NumberPool pool;
    std::string webhook_token;  // empty: the webhook needs a researcher token
    std::string llm_endpoint;
    std::string llm_model;
    std::string emr_file;

    /// Relative paths resolve against `base_dir`. Throws ConfigError or
    /// std::invalid_argument.
    static AdminConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
    static AdminConfig load(const std::string& path);
};

} // namespace protoflow::admin

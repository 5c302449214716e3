#pragma once

#include <map>
#include <memory>
#include <string>

#include "protoflow/admin/host.hpp"

namespace httplib {
class Server;
}

namespace protoflow::admin {

struct ApiResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::map<std::string, std::string> headers;  // lower-case names
    std::string body;
    std::string content_type;
};

/// The researcher API. Every route except GET /health needs
/// `Authorization: Bearer <token>`; POST /gateway/inbound also accepts the
/// configured webhook token as `?token=`.
///
///   POST /studies                          {name, pack, timezone, staff}
///   GET  /studies
///   GET  /studies/{id}
///   GET  /studies/{id}/graph               DOT text
///   POST /studies/{id}/participants        {participant_id, address, timezone}
///   GET  /studies/{id}/participants?state=
///   GET  /studies/{id}/metrics
///   GET  /studies/{id}/export.csv
///   GET  /participants/{id}
///   GET  /participants/{id}/audit?from=&to=
///   POST /participants/{id}/transition     {target_state, reason}
///   POST /participants/{id}/withdraw       {reason}
///   POST /chat/{session_id}                {text}
///   POST /gateway/inbound                  webhook, JSON or form encoded
class AdminServer {
public:
    explicit AdminServer(EngineHost& host);
    ~AdminServer();

    /// Routing without sockets.
    ApiResponse handle(const ApiRequest& req);

    /// Returns the bound port; port 0 picks a free one.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void listen();
    void stop();

private:
    EngineHost& host_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace protoflow::admin

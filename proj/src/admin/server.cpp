#include "protoflow/admin/server.hpp"

#include <httplib.h>

#include <regex>

#include "protoflow/admin/reports.hpp"
#include "protoflow/common/http.hpp"
#include "protoflow/dsl/dot.hpp"
#include "protoflow/dsl/parser.hpp"

namespace protoflow::admin {

using nlohmann::json;

namespace {

struct HttpError : std::runtime_error {
    HttpError(int status, const std::string& msg, json extra = json::object())
        : std::runtime_error(msg), status(status), extra(std::move(extra)) {}
    int status;
    json extra;
};

ApiResponse reply(int status, const json& j) { return {status, j.dump(), "application/json"}; }

json body_json(const ApiRequest& req) {
    if (req.body.empty()) return json::object();
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw HttpError(400, std::string("request body is not JSON: ") + e.what());
    }
}

std::string need_text(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
        throw HttpError(400, std::string("missing field '") + key + "'");
    }
    return j.at(key).get<std::string>();
}

std::string opt_text(const json& j, const char* key) {
    if (!j.contains(key)) return "";
    if (!j.at(key).is_string()) throw HttpError(400, std::string("field '") + key + "' must be text");
    return j.at(key).get<std::string>();
}

std::optional<Instant> query_time(const ApiRequest& req, const char* key) {
    auto it = req.query.find(key);
    if (it == req.query.end() || it->second.empty()) return std::nullopt;
    try {
        return parse_rfc3339(it->second);
    } catch (const std::exception&) {
        throw HttpError(400, std::string("'") + key + "' must be an RFC 3339 time");
    }
}

json study_json(const runtime::Study& s, std::size_t participants) {
    return {{"study_id", s.study_id},
            {"name", s.name},
            {"pack", s.pack->name},
            {"protocol", s.pack->protocol.protocol_id()},
            {"version_hash", s.pack->protocol.version_hash()},
            {"pack_hash", s.pack->hash},
            {"timezone", s.timezone},
            {"staff", s.staff},
            {"status", s.status == runtime::StudyStatus::active ? "active" : "closed"},
            {"created_at", format_rfc3339(s.created_at)},
            {"participant_count", participants}};
}

json audit_json(const std::vector<runtime::AuditRecord>& rs) {
    auto a = json::array();
    for (const auto& r : rs) a.push_back(runtime::to_json(r));
    return a;
}

} // namespace

AdminServer::AdminServer(EngineHost& host) : host_(host), server_(std::make_unique<httplib::Server>()) {
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
        ApiRequest r;
        r.method = req.method;
        r.path = req.path;
        for (const auto& [k, v] : req.params) r.query[k] = v;
        for (const auto& [k, v] : req.headers) {
            std::string lower;
            for (char c : k) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            r.headers[lower] = v;
        }
        r.body = req.body;
        r.content_type = req.get_header_value("Content-Type");
        auto out = handle(r);
        res.status = out.status;
        res.set_content(out.body, out.content_type);
    };
    if (!host_.config().static_dir.empty()) server_->set_mount_point("/console", host_.config().static_dir);
    server_->Get(".*", forward);
    server_->Post(".*", forward);
}

AdminServer::~AdminServer() { stop(); }

int AdminServer::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    if (!server_->bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void AdminServer::listen() { server_->listen_after_bind(); }

void AdminServer::stop() {
    if (server_) server_->stop();
}

ApiResponse AdminServer::handle(const ApiRequest& req) {
    static const std::regex study_re("^/studies/([^/]+)$");
    static const std::regex study_sub_re("^/studies/([^/]+)/(participants|metrics|export\\.csv|graph)$");
    static const std::regex participant_re("^/participants/([^/]+)$");
    static const std::regex participant_sub_re("^/participants/([^/]+)/(audit|transition|withdraw)$");
    static const std::regex chat_re("^/chat/([A-Za-z0-9_.-]{1,64})$");

    const bool get = req.method == "GET", post = req.method == "POST";
    try {
        if (get && req.path == "/health") return reply(200, {{"status", "ok"}});

        std::string actor;
        auto auth = req.headers.find("authorization");
        if (auth != req.headers.end() && auth->second.rfind("Bearer ", 0) == 0) {
            auto it = host_.config().tokens.find(auth->second.substr(7));
            if (it != host_.config().tokens.end()) actor = it->second;
        }
        if (actor.empty() && post && req.path == "/gateway/inbound" && !host_.config().webhook_token.empty()) {
            auto t = req.query.find("token");
            if (t != req.query.end() && t->second == host_.config().webhook_token) actor = "webhook";
        }
        if (actor.empty()) return reply(401, {{"error", "missing or unknown bearer token"}});

        std::smatch m;
        if (post && req.path == "/studies") {
            const auto body = body_json(req);
            const auto name = need_text(body, "name");
            const auto pack_name = need_text(body, "pack");
            std::shared_ptr<const runtime::Pack> pack;
            try {
                pack = host_.pack(pack_name);
            } catch (const dsl::CompileError& e) {
                auto diags = json::array();
                for (const auto& d : e.diagnostics()) diags.push_back(dsl::format_diagnostic(pack_name + "/protocol.pfp", d));
                throw HttpError(422, "protocol pack does not compile", {{"diagnostics", diags}});
            } catch (const std::exception& e) {
                throw HttpError(422, e.what());
            }
            runtime::StudyConfig cfg;
            cfg.name = name;
            cfg.timezone = body.contains("timezone") ? need_text(body, "timezone") : "UTC";
            if (body.contains("staff")) {
                if (!body["staff"].is_array()) throw HttpError(400, "field 'staff' must be a list");
                for (const auto& s : body["staff"]) cfg.staff.push_back(s.get<std::string>());
            }
            return host_.run([&](runtime::Engine& e) {
                try {
                    return reply(201, study_json(e.create_study(cfg, pack), 0));
                } catch (const std::invalid_argument& ex) {
                    throw HttpError(400, ex.what());
                } catch (const std::exception& ex) {
                    throw HttpError(422, ex.what());
                }
            });
        }
        if (get && req.path == "/studies") {
            return host_.run([&](runtime::Engine& e) {
                auto a = json::array();
                for (const auto* s : e.studies()) a.push_back(study_json(*s, e.participants(s->study_id).size()));
                return reply(200, a);
            });
        }
        if (get && std::regex_match(req.path, m, study_re)) {
            const std::string id = m[1];
            return host_.run([&](runtime::Engine& e) {
                return reply(200, study_json(e.study(id), e.participants(id).size()));
            });
        }
        if (std::regex_match(req.path, m, study_sub_re)) {
            const std::string id = m[1], what = m[2];
            if (post && what == "participants") {
                const auto body = body_json(req);
                const auto pid = need_text(body, "participant_id");
                const auto address = need_text(body, "address");
                const auto tz = opt_text(body, "timezone");
                return host_.run([&](runtime::Engine& e) {
                    try {
                        return reply(201, runtime::to_json(e.register_participant(id, pid, address, tz)));
                    } catch (const runtime::DuplicateParticipant& ex) {
                        throw HttpError(409, ex.what());
                    } catch (const runtime::UnknownStudy&) {
                        throw;
                    } catch (const std::invalid_argument& ex) {
                        throw HttpError(400, ex.what());
                    }
                });
            }
            if (get && what == "participants") {
                const auto state = req.query.count("state") ? req.query.at("state") : "";
                return host_.run([&](runtime::Engine& e) {
                    e.study(id);
                    auto a = json::array();
                    for (const auto* p : e.participants(id, state)) a.push_back(runtime::to_json(*p));
                    return reply(200, a);
                });
            }
            if (get && what == "metrics") {
                return host_.run([&](runtime::Engine& e) {
                    return reply(200, study_metrics(e, id, e.last_now().value_or(host_.clock().now())));
                });
            }
            if (get && what == "export.csv") {
                return host_.run([&](runtime::Engine& e) {
                    return ApiResponse{200, export_csv(e, id, e.last_now().value_or(host_.clock().now())), "text/csv"};
                });
            }
            if (get && what == "graph") {
                return host_.run([&](runtime::Engine& e) {
                    auto parsed = dsl::parse_protocol(e.study(id).pack->source);
                    return ApiResponse{200, dsl::export_dot(*parsed.graph), "text/vnd.graphviz"};
                });
            }
        }
        if (get && std::regex_match(req.path, m, participant_re)) {
            const std::string pid = m[1];
            return host_.run([&](runtime::Engine& e) {
                auto j = runtime::to_json(e.participant(pid));
                if (const auto* s = e.open_session(pid)) j["open_session"] = convo::to_json(*s);
                return reply(200, j);
            });
        }
        if (std::regex_match(req.path, m, participant_sub_re)) {
            const std::string pid = m[1], what = m[2];
            if (get && what == "audit") {
                const auto from = query_time(req, "from"), to = query_time(req, "to");
                return host_.run([&](runtime::Engine& e) { return reply(200, audit_json(e.audit_trail(pid, from, to))); });
            }
            if (post && what == "transition") {
                const auto body = body_json(req);
                const auto target = need_text(body, "target_state");
                const auto reason = need_text(body, "reason");
                return host_.run([&](runtime::Engine& e) {
                    try {
                        auto out = e.manual_transition(pid, target, actor, reason);
                        auto j = runtime::to_json(out);
                        j["participant"] = runtime::to_json(e.participant(pid));
                        return reply(200, j);
                    } catch (const runtime::UnknownState& ex) {
                        throw HttpError(409, ex.what());
                    } catch (const std::logic_error& ex) {
                        if (dynamic_cast<const std::out_of_range*>(&ex)) throw;
                        throw HttpError(409, ex.what());
                    }
                });
            }
            if (post && what == "withdraw") {
                const auto body = body_json(req);
                const auto reason = need_text(body, "reason");
                return host_.run([&](runtime::Engine& e) {
                    try {
                        e.withdraw(pid, actor, reason);
                    } catch (const runtime::UnknownParticipant&) {
                        throw;
                    } catch (const std::logic_error& ex) {
                        throw HttpError(409, ex.what());
                    }
                    return reply(200, runtime::to_json(e.participant(pid)));
                });
            }
        }
        if (post && std::regex_match(req.path, m, chat_re)) {
            const std::string address = "chat:" + std::string(m[1]);
            const auto text = need_text(body_json(req), "text");
            return host_.run([&](runtime::Engine& e) {
                const auto first = e.next_seq();
                gateway::InboundMessage msg;
                msg.from_address = address;
                msg.body = text;
                msg.received_at = host_.clock().now();
                auto out = e.receive(msg);
                auto j = runtime::to_json(out);
                auto replies = json::array();
                const auto& log = e.audit_log();
                auto it = log.end();
                while (it != log.begin() && std::prev(it)->seq >= first) --it;
                for (; it != log.end(); ++it) {
                    if (it->kind == runtime::AuditKind::message_out && it->detail.value("to", "") == address &&
                        it->detail.value("status", "") == "sent") {
                        replies.push_back(it->detail.at("body"));
                    }
                }
                j["replies"] = std::move(replies);
                return reply(out.dead_letter ? 404 : 200, j);
            });
        }
        if (post && req.path == "/gateway/inbound") {
            gateway::RawInbound raw;
            try {
                raw = gateway::parse_webhook(req.content_type, req.body);
            } catch (const std::exception& ex) {
                throw HttpError(400, ex.what());
            }
            auto msg = gateway::accept_inbound(raw, &host_.blobs(), host_.clock().now());
            return host_.run([&](runtime::Engine& e) { return reply(200, runtime::to_json(e.receive(msg))); });
        }
        return reply(404, {{"error", "no route for " + req.method + " " + req.path}});
    } catch (const HttpError& e) {
        json j = e.extra;
        j["error"] = e.what();
        return reply(e.status, j);
    } catch (const std::out_of_range& e) {
        return reply(404, {{"error", e.what()}});
    } catch (const std::exception& e) {
        return reply(500, {{"error", e.what()}});
    }
}

} // namespace protoflow::admin

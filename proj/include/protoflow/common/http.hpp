#pragma once

#include <chrono>
#include <map>
#include <string>

namespace protoflow {

struct HttpResponse {
    int status = 0;  // 0 when the request never got a response
    std::string body;
    std::string error;
    std::string content_type;
};

/// Blocking request to an absolute http:// or https:// URL. `method` is
/// GET, POST, PUT or DELETE.
HttpResponse http_request(const std::string& method, const std::string& url,
                          const std::map<std::string, std::string>& headers, const std::string& body = "",
                          const std::string& content_type = "application/json",
                          std::chrono::seconds timeout = std::chrono::seconds(30));

inline HttpResponse http_post(const std::string& url, const std::map<std::string, std::string>& headers,
                              const std::string& body, const std::string& content_type,
                              std::chrono::seconds timeout = std::chrono::seconds(30)) {
    return http_request("POST", url, headers, body, content_type, timeout);
}

/// Form-style percent encoding ("a b" -> "a+b" is accepted on decode).
std::string url_encode(const std::string& s);
std::string url_decode(const std::string& s);

} // namespace protoflow

#include "protoflow/common/http.hpp"

#include <httplib.h>

namespace protoflow {

HttpResponse http_request(const std::string& method, const std::string& url,
                          const std::map<std::string, std::string>& headers, const std::string& body,
                          const std::string& content_type, std::chrono::seconds timeout) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, "", "not an absolute URL: " + url, ""};
    const auto path_start = url.find('/', scheme_end + 3);
    const auto origin = url.substr(0, path_start);
    const auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);

    httplib::Result res{nullptr, httplib::Error::Unknown};
    if (method == "GET") {
        res = client.Get(path, h);
    } else if (method == "POST") {
        res = client.Post(path, h, body, content_type);
    } else if (method == "PUT") {
        res = client.Put(path, h, body, content_type);
    } else if (method == "DELETE") {
        res = client.Delete(path, h, body, content_type);
    } else {
        return {0, "", "unsupported method " + method, ""};
    }
    if (!res) return {0, "", httplib::to_string(res.error()), ""};
    return {res->status, res->body, "", res->get_header_value("Content-Type")};
}

std::string url_encode(const std::string& s) { return httplib::detail::encode_query_param(s); }

std::string url_decode(const std::string& s) { return httplib::detail::decode_url(s, true); }

} // namespace protoflow

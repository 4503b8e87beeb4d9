#pragma once

// Default transport for HttpChatBackend. Kept out of generation.hpp so unit
// tests (which inject scripted transports) never pull the socket stack in.

#include <string>
#include <utility>
#include <vector>

#include "httplib.h"

#include "fairsynth/generation.hpp"

namespace fairsynth {

inline HttpTransport make_http_transport(int timeout_seconds = 120) {
    return [timeout_seconds](const std::string& endpoint,
                             const std::vector<std::pair<std::string, std::string>>& headers,
                             const std::string& json_body) -> HttpResult {
        std::string base = endpoint, path = "/";
        const auto scheme_end = endpoint.find("://");
        if (scheme_end != std::string::npos) {
            const auto path_start = endpoint.find('/', scheme_end + 3);
            if (path_start != std::string::npos) {
                base = endpoint.substr(0, path_start);
                path = endpoint.substr(path_start);
            }
        }

        httplib::Client client(base);
        client.set_connection_timeout(timeout_seconds, 0);
        client.set_read_timeout(timeout_seconds, 0);
        client.set_write_timeout(timeout_seconds, 0);

        httplib::Headers h;
        for (const auto& [key, value] : headers) h.emplace(key, value);

        httplib::Result res = client.Post(path, h, json_body, "application/json");
        if (!res) return {true, httplib::to_string(res.error()), 0, ""};
        return {false, "", res->status, res->body};
    };
}

} // namespace fairsynth

#pragma once

// HTTP/JSON binding of SessionManager (cpp-httplib).
//
//   GET  /datasets
//   POST /sessions                      -> 201 {"id"}
//   GET  /sessions/{id}
//   GET  /sessions/{id}/pending?wait_ms=N
//   POST /sessions/{id}/labels
//   GET  /sessions/{id}/result?preview=i&vids=a,b,c

#include <algorithm>
#include <chrono>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vqbe/session_api.hpp"

namespace vqbe {

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const ApiError& e) {
        send_json(res, e.status(), {{"error", e.what()}});
    } catch (const nlohmann::json::exception& e) {
        send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
    } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
    }
}

inline std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

inline int int_param(const httplib::Request& req, const char* name, int fallback) {
    if (!req.has_param(name)) return fallback;
    try {
        return std::stoi(req.get_param_value(name));
    } catch (const std::exception&) {
        throw ApiError(400, std::string("query parameter '") + name + "' must be an integer");
    }
}

}  // namespace detail

/// Registers the session routes on `server`. The manager must outlive it.
inline void mount_session_api(httplib::Server& server, SessionManager& mgr) {
    using detail::guarded;
    using detail::send_json;

    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/datasets", [&](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, mgr.list_datasets()); });
    });
    server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 201, mgr.create_session(nlohmann::json::parse(req.body))); });
    });
    server.Get(R"(/sessions/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, mgr.get_session(req.matches[1])); });
    });
    server.Get(R"(/sessions/([^/]+)/pending)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const int wait = std::clamp(detail::int_param(req, "wait_ms", 0), 0, 30000);
            send_json(res, 200, mgr.get_pending(req.matches[1], std::chrono::milliseconds(wait)));
        });
    });
    server.Post(R"(/sessions/([^/]+)/labels)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, mgr.submit_labels(req.matches[1], nlohmann::json::parse(req.body))); });
    });
    server.Get(R"(/sessions/([^/]+)/result)", [&](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::optional<int> preview;
            if (req.has_param("preview")) preview = detail::int_param(req, "preview", 0);
            std::vector<std::string> vids;
            if (req.has_param("vids")) vids = detail::split_commas(req.get_param_value("vids"));
            send_json(res, 200, mgr.get_result(req.matches[1], preview, vids));
        });
    });
}

}  // namespace vqbe

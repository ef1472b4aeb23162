#pragma once

// HTTP+JSON binding of GameService. Every error body is {"code", "message"}.

#include <atomic>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ibacct/gamesvc.hpp"

namespace ibacct {

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, {{"code", code}, {"message", message}});
}

/// Runs `fn`, translating service and parse failures into JSON error responses.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const GameError& e) {
        send_error(res, e.status(), e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "bad_request", std::string("malformed JSON body: ") + e.what());
    } catch (const ValidationError& e) {
        send_error(res, 422, "invalid", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
    }
}

inline std::string body_string(const nlohmann::json& body, const char* key) {
    if (!body.is_object() || !body.contains(key) || !body[key].is_string()) {
        throw GameError("bad_request", 400, std::string("body needs string field '") + key + "'");
    }
    return body[key].get<std::string>();
}

}  // namespace detail

inline void install_routes(httplib::Server& server, GameService& svc) {
    using httplib::Request;
    using httplib::Response;

    server.Post("/sessions", [&svc](const Request& req, Response& res) {
        detail::guarded(res, [&] {
            const auto body = nlohmann::json::parse(req.body.empty() ? "{}" : req.body);
            detail::send_json(res, 201, svc.create_session(detail::body_string(body, "participant_id")));
        });
    });
    server.Get(R"(/sessions/([^/]+)/board)", [&svc](const Request& req, Response& res) {
        detail::guarded(res, [&] { detail::send_json(res, 200, svc.board(req.matches[1])); });
    });
    server.Post(R"(/sessions/([^/]+)/placements)", [&svc](const Request& req, Response& res) {
        detail::guarded(res, [&] {
            const auto body = nlohmann::json::parse(req.body);
            detail::send_json(res, 200,
                              svc.place_job(req.matches[1], detail::body_string(body, "job_id"),
                                            detail::body_string(body, "machine_id")));
        });
    });
    server.Post(R"(/sessions/([^/]+)/finish)", [&svc](const Request& req, Response& res) {
        detail::guarded(res, [&] { detail::send_json(res, 200, svc.finish_session(req.matches[1])); });
    });
    server.Get("/export", [&svc](const Request& req, Response& res) {
        detail::guarded(res, [&] {
            ExportFilter f;
            if (req.has_param("version")) f.version = parse_version(req.get_param_value("version"));
            if (req.has_param("include_flagged")) {
                const auto v = req.get_param_value("include_flagged");
                if (v != "true" && v != "false") {
                    throw GameError("bad_request", 400, "include_flagged must be true or false");
                }
                f.include_flagged = v == "true";
            }
            detail::send_json(res, 200, svc.export_results(f));
        });
    });
    server.set_error_handler([](const Request&, Response& res) {
        if (res.body.empty()) detail::send_error(res, res.status, "not_found", "no such route");
    });
}

/// Serves `svc` on a background thread until stop() or destruction.
class GameServer {
public:
    explicit GameServer(GameService& svc) { install_routes(server_, svc); }
    GameServer(const GameServer&) = delete;
    GameServer& operator=(const GameServer&) = delete;
    ~GameServer() { stop(); }

    /// Binds `host:port` (port 0 picks a free one) and returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return bound;
    }

    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }

    httplib::Server& server() noexcept { return server_; }

private:
    httplib::Server server_;
    std::thread thread_;
};

}  // namespace ibacct

/**
 * @file http_server.hpp
 * @brief cpp-httplib routes for the service handlers plus static file serving
 */
#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

// Eigen must come first: httplib pulls in <resolv.h>, whose `_res` macro
// clashes with Eigen parameter names.
#include "uvstyle/service.hpp"

#include <httplib.h>

namespace uvstyle {

struct ServiceConfig {
    std::filesystem::path store_dir = "store";
    std::filesystem::path data_dir = "data";
    std::filesystem::path static_dir;  ///< empty = no static serving
    std::string host = "0.0.0.0";
    int port = 8080;

    /// Fills unset fields from UVSTYLE_STORE, UVSTYLE_DATA and UVSTYLE_PORT.
    static ServiceConfig from_env() {
        ServiceConfig c;
        if (const char* s = std::getenv("UVSTYLE_STORE")) c.store_dir = s;
        if (const char* s = std::getenv("UVSTYLE_DATA")) c.data_dir = s;
        if (const char* s = std::getenv("UVSTYLE_PORT")) {
            try {
                c.port = std::stoi(s);
            } catch (const std::exception&) {
                throw ConfigError(std::string("UVSTYLE_PORT is not a port number: ") + s);
            }
        }
        return c;
    }
};

namespace detail {

inline void reply(httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
}

inline json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw RequestError("", std::string("malformed JSON: ") + e.what(), 400);
    }
}

}  // namespace detail

/// Registers every API route on `server`, reading the current snapshot from `cell`.
inline void install_routes(httplib::Server& server, std::shared_ptr<SnapshotCell> cell) {
    using httplib::Request;
    using Res = httplib::Response;

    server.Get("/api/solids", [cell](const Request& req, Res& res) {
        detail::reply(res, guarded([&] {
                          int page = 0;
                          if (req.has_param("page")) {
                              try {
                                  page = std::stoi(req.get_param_value("page"));
                              } catch (const std::exception&) {
                                  throw RequestError("page", "page must be an integer", 400);
                              }
                          }
                          return handle_list_solids(*cell->get(), page);
                      }));
    });
    server.Get("/api/solids/:id", [cell](const Request& req, Res& res) {
        detail::reply(res, guarded([&] { return handle_solid(*cell->get(), req.path_params.at("id")); }));
    });
    server.Get("/api/solids/:id/mesh", [cell](const Request& req, Res& res) {
        detail::reply(res, guarded([&] { return handle_mesh(*cell->get(), req.path_params.at("id")); }));
    });
    server.Get("/api/layers", [cell](const Request&, Res& res) {
        detail::reply(res, guarded([&] { return handle_layers(*cell->get()); }));
    });
    server.Post("/api/query", [cell](const Request& req, Res& res) {
        detail::reply(res, guarded([&] { return handle_query(*cell->get(), detail::parse_body(req)); }));
    });
    server.Post("/api/fewshot", [cell](const Request& req, Res& res) {
        detail::reply(res, guarded([&] { return handle_fewshot(*cell->get(), detail::parse_body(req)); }));
    });
    server.Post("/api/gradient", [cell](const Request& req, Res& res) {
        detail::reply(res, guarded([&] { return handle_gradient(*cell->get(), detail::parse_body(req)); }));
    });
    server.Post("/api/reload", [cell](const Request&, Res& res) {
        detail::reply(res, guarded([&] {
                          const auto old = cell->get();
                          cell->set(load_snapshot(old->store_dir, old->data_dir));
                          const auto now = cell->get();
                          return Response{200, {{"reloaded", true}, {"count", now->store.size()}}};
                      }));
    });
}

/// Loads the snapshot (failing with the offending path), then serves until stopped.
inline void serve(const ServiceConfig& cfg, httplib::Server& server) {
    auto cell = std::make_shared<SnapshotCell>(load_snapshot(cfg.store_dir, cfg.data_dir));
    install_routes(server, cell);
    if (!cfg.static_dir.empty()) {
        if (!std::filesystem::is_directory(cfg.static_dir))
            throw ConfigError("static directory not found: " + cfg.static_dir.string());
        server.set_mount_point("/", cfg.static_dir.string());
    }
    if (!server.listen(cfg.host, cfg.port))
        throw Error("could not listen on " + cfg.host + ":" + std::to_string(cfg.port));
}

}  // namespace uvstyle

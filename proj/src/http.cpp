#include "hpyts/http.hpp"

#include <charconv>

#include "httplib.h"

namespace hpyts {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, json{{"code", code}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ServiceError(400, "bad_json", std::string("request body is not valid JSON: ") + e.what());
  }
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ServiceError& e) {
      send_error(res, e.status(), e.code(), e.what());
    } catch (const std::invalid_argument& e) {
      send_error(res, 422, "unprocessable", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace

void install_routes(httplib::Server& server, AdvisorService& service, HttpOptions options) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});

  const std::string token = options.token;
  server.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
    if (req.method == "OPTIONS" || req.path == "/healthz" || token.empty())
      return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") != "Bearer " + token) {
      send_error(res, 401, "unauthorized", "missing or wrong bearer token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, json{{"status", "ok"}});
  });

  server.Post("/sessions", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 201, service.create_session(parse_body(req)));
              }));

  server.Get(R"(/sessions/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, service.get_session(req.matches[1]));
             }));

  server.Post(R"(/sessions/([^/]+)/recommend)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, service.recommend(req.matches[1], parse_body(req)));
              }));

  server.Post(R"(/sessions/([^/]+)/observations)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, service.observe(req.matches[1], parse_body(req)));
              }));

  server.Get(R"(/sessions/([^/]+)/forecast)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               int M = service.get_session(id).at("config").at("forecast_M").get<int>();
               if (req.has_param("M")) {
                 const std::string raw = req.get_param_value("M");
                 const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), M);
                 if (ec != std::errc() || ptr != raw.data() + raw.size())
                   throw ServiceError(400, "bad_request", "'M' must be an integer");
               }
               send_json(res, 200, service.forecast(id, M));
             }));

  server.Get(R"(/sessions/([^/]+)/history)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, service.history(req.matches[1]));
             }));

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      if (res.status == 404)
        send_error(res, 404, "not_found", "no such route");
      else if (res.status >= 400)
        send_error(res, res.status, "error", "request failed");
    }
  });
}

}  // namespace hpyts

#pragma once

// HTTP+JSON routes for the advisor service.

#include <string>

#include "hpyts/service.hpp"

namespace httplib {
class Server;
}

namespace hpyts {

struct HttpOptions {
  /// When nonempty, every route except /healthz requires
  /// "Authorization: Bearer <token>".
  std::string token;
};

void install_routes(httplib::Server& server, AdvisorService& service, HttpOptions options = {});

}  // namespace hpyts

#pragma once

// HTTP transport for SessionApi (cpp-httplib).

#include <chrono>
#include <string>

#include <httplib.h>

#include "cpclean/error.hpp"
#include "cpclean/session.hpp"

namespace cpclean {

class SessionServer {
 public:
  explicit SessionServer(SessionManager& manager,
                         std::chrono::milliseconds suggestion_wait = std::chrono::milliseconds(2000))
      : api_(manager, suggestion_wait) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      const auto r = api_.handle(req.method, req.path, req.body);
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server_.Post(R"(/sessions.*)", handler);
    server_.Get(R"(/sessions.*)", handler);
    // No SO_REUSEPORT: a second server on a taken port must fail to bind.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
  }

  // Binds to host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  // Serves until stop() is called.
  void run() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  SessionApi api_;
  httplib::Server server_;
};

}  // namespace cpclean

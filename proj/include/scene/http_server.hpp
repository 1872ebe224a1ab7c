#pragma once

// Serves any Backend over the wire protocol (used by `scene mock-serve`).

#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "scene/backend.hpp"
#include "scene/protocol.hpp"

namespace scene {

class ProtocolServer {
 public:
  explicit ProtocolServer(Backend& backend) : backend_(backend) {
    for (const auto& ep : protocol::endpoints()) {
      server_.Post(ep, [this, ep](const httplib::Request& req, httplib::Response& res) {
        protocol::Reply reply;
        try {
          const auto body = req.body.empty() ? protocol::json::object() : protocol::json::parse(req.body);
          reply = protocol::dispatch(backend_, ep, body);
        } catch (const protocol::json::parse_error& e) {
          reply = {400, protocol::encode_error(std::string("request is not JSON: ") + e.what())};
        }
        res.status = reply.status;
        res.set_content(reply.body.dump(), "application/json");
      });
    }
  }

  ProtocolServer(const ProtocolServer&) = delete;
  ProtocolServer& operator=(const ProtocolServer&) = delete;

  ~ProtocolServer() { stop(); }

  // Blocks until stop().
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  // Serves on a background thread. Port 0 picks an ephemeral port.
  // Returns the bound port, or -1 if binding failed.
  int start_background(const std::string& host = "127.0.0.1", int port = 0) {
    if (port == 0) {
      port = server_.bind_to_any_port(host);
      if (port <= 0) return -1;
    } else if (!server_.bind_to_port(host, port)) {
      return -1;
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  Backend& backend_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace scene

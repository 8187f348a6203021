#pragma once

// In-process bridge speaking the wire protocol, for client tests.

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mvtex/wire.hpp"

namespace mock {

enum class Mode {
  echo,              // eps = the request latents
  zero,              // eps = 0
  version_mismatch,  // 409 on every versioned request, health reports version 2
  flaky,             // the first `stalls` requests hang past the client timeout
  error,             // HTTP 500 with a message
};

class Bridge {
public:
  explicit Bridge(Mode mode, int stalls = 0, int stall_ms = 400) : mode_(mode), stalls_(stalls), stall_ms_(stall_ms)
  {
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      const int v = mode_ == Mode::version_mismatch ? mvtex::kProtocolVersion + 1 : mvtex::kProtocolVersion;
      res.set_content(nlohmann::json{{"version", v}}.dump(), "application/json");
    });
    server_.Post("/v1/denoise", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, "eps_");
    });
    server_.Post("/v1/decode", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, "image_");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) {
      throw std::runtime_error("mock bridge: cannot bind");
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~Bridge()
  {
    server_.stop();
    if (thread_.joinable()) {
      thread_.join();
    }
  }

  Bridge(const Bridge&) = delete;
  Bridge& operator=(const Bridge&) = delete;

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_.load(); }

  std::vector<mvtex::DenoiseRequest> received() const
  {
    const std::lock_guard lock(mu_);
    return received_;
  }

private:
  void handle(const httplib::Request& req, httplib::Response& res, const std::string& prefix)
  {
    const int n = requests_++;
    if (mode_ == Mode::flaky && n < stalls_) {
      std::this_thread::sleep_for(std::chrono::milliseconds(stall_ms_));
    }
    if (req.get_header_value(mvtex::kProtocolHeader) != std::to_string(mvtex::kProtocolVersion) ||
        mode_ == Mode::version_mismatch) {
      res.status = 409;
      res.set_content("protocol version mismatch", "text/plain");
      return;
    }
    if (mode_ == Mode::error) {
      res.status = 500;
      res.set_content("model exploded", "text/plain");
      return;
    }
    try {
      // The server has already split the multipart body into req.files.
      std::vector<mvtex::WirePart> parts;
      for (const auto& [name, file] : req.files) {
        parts.push_back({name, file.content_type, file.content});
      }
      auto dreq = mvtex::decode_request(parts);
      mvtex::DenoiseResponse out;
      out.backend_info = "mock";
      for (const auto& z : dreq.latents) {
        out.eps.push_back(mode_ == Mode::zero ? mvtex::Image(z.width(), z.height(), z.channels()) : z);
      }
      const auto body = mvtex::encode_response(out, dreq.uuid, prefix);
      {
        const std::lock_guard lock(mu_);
        received_.push_back(std::move(dreq));
      }
      res.set_content(body.body, body.content_type);
    } catch (const mvtex::Error& e) {
      res.status = 400;
      res.set_content(e.what(), "text/plain");
    }
  }

  Mode mode_;
  int stalls_;
  int stall_ms_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  mutable std::mutex mu_;
  std::vector<mvtex::DenoiseRequest> received_;
};

}  // namespace mock

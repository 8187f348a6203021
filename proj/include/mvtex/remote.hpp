#pragma once

// HTTP client for a denoiser bridge speaking the multipart wire format.

#include <httplib.h>
#include <json.hpp>

#include <boost/uuid/random_generator.hpp>
#include <boost/uuid/uuid_io.hpp>

#include <chrono>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mvtex/denoiser.hpp"
#include "mvtex/error.hpp"
#include "mvtex/wire.hpp"

namespace mvtex {

struct RemoteOptions {
  std::string url;  // scheme://host:port
  int retries = 2;  // extra attempts after a transport failure
  int retry_delay_ms = 100;
  int connect_timeout_ms = 5000;
  int read_timeout_ms = 600000;
  bool send_biases = true;
};

inline std::string new_request_uuid()
{
  static std::mutex mu;
  static boost::uuids::random_generator gen;
  const std::lock_guard lock(mu);
  return boost::uuids::to_string(gen());
}

class RemoteDenoiser : public DenoiseBackend {
public:
  explicit RemoteDenoiser(RemoteOptions opt) : opt_(std::move(opt))
  {
    require(!opt_.url.empty(), ErrorCode::config, "remote backend needs an endpoint URL");
    require(opt_.retries >= 0, ErrorCode::config, "retries must be non-negative");
  }

  /// Protocol version reported by GET /v1/health.
  int health()
  {
    auto res = send([](httplib::Client& c) { return c.Get("/v1/health", protocol_headers()); });
    check_status(res);
    const auto j = nlohmann::json::parse(res.body, nullptr, false);
    require(!j.is_discarded() && j.contains("version"), ErrorCode::protocol, "health reply lacks a version");
    const int v = j["version"].is_number_integer() ? j["version"].get<int>() : -1;
    require(v == kProtocolVersion, ErrorCode::protocol,
            "bridge speaks protocol " + j["version"].dump() + ", client speaks " + std::to_string(kProtocolVersion));
    return v;
  }

  DenoiseResponse denoise(const DenoiseRequest& in) override
  {
    DenoiseRequest req = in;
    if (req.uuid.empty()) {
      req.uuid = new_request_uuid();
    }
    const auto body = encode_request(req, opt_.send_biases);
    auto res = post("/v1/denoise", body);
    auto out = decode_response(decode_multipart(content_type(res), res.body), req);
    for (std::size_t n = 0; n < out.eps.size(); ++n) {
      require(out.eps[n].same_shape(req.latents[n]), ErrorCode::protocol,
              "eps tensor " + std::to_string(n) + " does not match the latent shape");
    }
    return out;
  }

  std::vector<Image> decode(const std::vector<Image>& latents) override
  {
    DenoiseRequest req;
    req.uuid = new_request_uuid();
    req.latents = latents;
    const auto body = encode_request(req, false);
    auto res = post("/v1/decode", body);
    return decode_response(decode_multipart(content_type(res), res.body), req, "image_").eps;
  }

  std::string name() const override { return "remote:" + opt_.url; }
  int attempts() const noexcept { return attempts_; }

private:
  static httplib::Headers protocol_headers()
  {
    return {{kProtocolHeader, std::to_string(kProtocolVersion)}};
  }

  static std::string content_type(const httplib::Response& res)
  {
    return res.get_header_value("Content-Type");
  }

  httplib::Response post(const char* path, const MultipartBody& body)
  {
    auto res = send([&](httplib::Client& c) {
      return c.Post(path, protocol_headers(), body.body, body.content_type);
    });
    check_status(res);
    return res;
  }

  template <typename Call>
  httplib::Response send(Call&& call)
  {
    std::string last_error;
    for (int attempt = 0; attempt <= opt_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(opt_.retry_delay_ms));
      }
      ++attempts_;
      httplib::Client client(opt_.url);
      require(client.is_valid(), ErrorCode::config, "invalid bridge URL '" + opt_.url + "'");
      client.set_connection_timeout(std::chrono::milliseconds(opt_.connect_timeout_ms));
      client.set_read_timeout(std::chrono::milliseconds(opt_.read_timeout_ms));
      auto res = call(client);
      if (res) {
        return *res;
      }
      last_error = httplib::to_string(res.error());
    }
    fail(ErrorCode::transport, "bridge " + opt_.url + " unreachable after " + std::to_string(opt_.retries + 1) +
                                   " attempt(s): " + last_error);
  }

  static void check_status(const httplib::Response& res)
  {
    if (res.status == 409) {
      fail(ErrorCode::protocol, "bridge rejected the protocol version: " + res.body);
    }
    if (res.status != 200) {
      fail(ErrorCode::backend, "bridge returned HTTP " + std::to_string(res.status) + ": " + res.body);
    }
  }

  RemoteOptions opt_;
  int attempts_ = 0;
};

}  // namespace mvtex

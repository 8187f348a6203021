#pragma once

// Denoiser wire format: a multipart body holding a JSON "manifest" part and one TWTF
// part per tensor.

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "mvtex/attention.hpp"
#include "mvtex/denoiser.hpp"
#include "mvtex/error.hpp"
#include "mvtex/tensor_io.hpp"

namespace mvtex {

inline constexpr int kProtocolVersion = 1;
inline constexpr const char* kProtocolHeader = "X-Protocol-Version";

struct WirePart {
  std::string name;
  std::string content_type;
  std::string content;
};

struct MultipartBody {
  std::string content_type;
  std::string body;
};

inline MultipartBody encode_multipart(const std::vector<WirePart>& parts)
{
  httplib::MultipartFormDataItems items;
  items.reserve(parts.size());
  for (const auto& p : parts) {
    items.push_back({p.name, p.content, "", p.content_type});
  }
  const auto boundary = httplib::detail::make_multipart_data_boundary();
  return {httplib::detail::serialize_multipart_formdata_get_content_type(boundary),
          httplib::detail::serialize_multipart_formdata(items, boundary)};
}

inline std::vector<WirePart> decode_multipart(const std::string& content_type, const std::string& body)
{
  std::string boundary;
  require(content_type.rfind("multipart/form-data", 0) == 0 &&
              httplib::detail::parse_multipart_boundary(content_type, boundary),
          ErrorCode::protocol, "expected a multipart/form-data body, got '" + content_type + "'");
  httplib::detail::MultipartFormDataParser parser;
  parser.set_boundary(std::move(boundary));
  std::vector<WirePart> parts;
  const bool ok = parser.parse(
      body.data(), body.size(),
      [&](const char* data, std::size_t n) {
        parts.back().content.append(data, n);
        return true;
      },
      [&](const httplib::MultipartFormData& header) {
        parts.push_back({header.name, header.content_type, {}});
        return true;
      });
  require(ok && parser.is_valid(), ErrorCode::protocol, "malformed multipart body");
  return parts;
}

inline const WirePart& find_part(const std::vector<WirePart>& parts, const std::string& name)
{
  for (const auto& p : parts) {
    if (p.name == name) {
      return p;
    }
  }
  fail(ErrorCode::protocol, "multipart body lacks part '" + name + "'");
}

inline Tensor to_tensor(const Matrix& m)
{
  Tensor t;
  t.shape = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.data = m.data();
  return t;
}

inline Matrix matrix_from_tensor(const Tensor& t)
{
  require(t.shape.size() == 2, ErrorCode::shape_mismatch, "expected a rank-2 tensor for a matrix");
  Matrix m(static_cast<int>(t.shape[0]), static_cast<int>(t.shape[1]));
  m.data() = t.data;
  return m;
}

/// Metadata shipped next to a serialized bias matrix.
inline nlohmann::json bias_sidecar(const BiasMatrix& w)
{
  return {{"view", w.view},
          {"resolution", w.resolution},
          {"o", w.params.o},
          {"r", w.params.r},
          {"delta", w.params.delta},
          {"attended_views", w.attended},
          {"masked_value", kMaskedBias}};
}

inline std::string bias_part_name(int view, int res)
{
  return "bias_" + std::to_string(view) + "_" + std::to_string(res);
}

namespace detail {

inline nlohmann::json shape_json(const Image& img)
{
  return nlohmann::json::array({img.height(), img.width(), img.channels()});
}

inline WirePart tensor_part(const std::string& name, const Tensor& t)
{
  return {name, "application/x-twtf", encode_twtf(t)};
}

inline nlohmann::json parse_manifest(const std::vector<WirePart>& parts)
{
  const auto& m = find_part(parts, "manifest");
  auto j = nlohmann::json::parse(m.content, nullptr, false);
  require(!j.is_discarded() && j.is_object(), ErrorCode::protocol, "manifest part is not a JSON object");
  require(j.value("protocol_version", -1) == kProtocolVersion, ErrorCode::protocol,
          "manifest protocol version " + std::to_string(j.value("protocol_version", -1)) + ", expected " +
              std::to_string(kProtocolVersion));
  return j;
}

template <typename F>
decltype(auto) manifest_field(F&& read, const char* what)
{
  try {
    return read();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::protocol, std::string("manifest field ") + what + ": " + e.what());
  }
}

inline Image image_part(const std::vector<WirePart>& parts, const std::string& name)
{
  try {
    return grid_from_tensor<float>(decode_twtf(find_part(parts, name).content));
  } catch (const Error& e) {
    fail(ErrorCode::protocol, "part '" + name + "': " + e.what());
  }
}

}  // namespace detail

/// Request body. Bias matrices are included when the request carries them and
/// `with_biases` is set.
inline MultipartBody encode_request(const DenoiseRequest& req, bool with_biases = true)
{
  req.validate();
  nlohmann::json m = {{"protocol_version", kProtocolVersion},
                      {"uuid", req.uuid},
                      {"step_index", req.step_index},
                      {"timestep_value", req.timestep},
                      {"alpha_bar", req.alpha_bar},
                      {"prompt", req.prompt},
                      {"prompt_suffixes", req.prompt_suffixes},
                      {"cfg_scale", req.cfg_scale},
                      {"mode", std::string(to_string(req.mode))},
                      {"n_views", req.n_views()}};
  m["shapes"] = {{"latent", detail::shape_json(req.latents[0])}};
  if (!req.depth_maps.empty()) {
    m["shapes"]["depth"] = detail::shape_json(req.depth_maps[0]);
  }
  std::vector<WirePart> parts;
  parts.push_back({"manifest", "application/json", {}});
  for (int n = 0; n < req.n_views(); ++n) {
    parts.push_back(detail::tensor_part("latent_" + std::to_string(n), to_tensor(req.latents[n])));
  }
  for (std::size_t n = 0; n < req.depth_maps.size(); ++n) {
    parts.push_back(detail::tensor_part("depth_" + std::to_string(n), to_tensor(req.depth_maps[n])));
  }
  nlohmann::json refs = nlohmann::json::array();
  if (with_biases && req.biases) {
    for (const auto& per_res : req.biases->per_view) {
      for (const auto& w : per_res) {
        auto ref = bias_sidecar(w);
        ref["part"] = bias_part_name(w.view, w.resolution);
        refs.push_back(ref);
        parts.push_back(detail::tensor_part(ref["part"].get<std::string>(), to_tensor(w.entries)));
      }
    }
  }
  m["bias_refs"] = refs;
  parts[0].content = m.dump();
  return encode_multipart(parts);
}

/// Server side: rebuilds the request from its parts.
inline DenoiseRequest decode_request(const std::vector<WirePart>& parts)
{
  const auto m = detail::parse_manifest(parts);
  DenoiseRequest req;
  const int n_views = detail::manifest_field(
      [&] {
        req.uuid = m.at("uuid").get<std::string>();
        req.step_index = m.at("step_index").get<int>();
        req.timestep = m.at("timestep_value").get<int>();
        req.alpha_bar = m.at("alpha_bar").get<double>();
        req.prompt = m.at("prompt").get<std::string>();
        req.prompt_suffixes = m.value("prompt_suffixes", std::vector<std::string>{});
        req.cfg_scale = m.at("cfg_scale").get<double>();
        req.mode = attention_mode_from_string(m.at("mode").get<std::string>());
        return m.at("n_views").get<int>();
      },
      "header");
  require(n_views >= 1, ErrorCode::protocol, "manifest n_views must be positive");
  const bool has_depth = detail::manifest_field([&] { return m.at("shapes").contains("depth"); }, "shapes");
  for (int n = 0; n < n_views; ++n) {
    req.latents.push_back(detail::image_part(parts, "latent_" + std::to_string(n)));
    if (has_depth) {
      req.depth_maps.push_back(detail::image_part(parts, "depth_" + std::to_string(n)));
    }
  }
  const auto& refs = m.value("bias_refs", nlohmann::json::array());
  if (!refs.empty()) {
    auto biases = std::make_shared<ViewBiases>();
    biases->per_view.resize(n_views);
    for (const auto& ref : refs) {
      detail::manifest_field(
          [&] {
            BiasMatrix w;
            w.view = ref.at("view").get<int>();
            w.resolution = ref.at("resolution").get<int>();
            w.params = {ref.at("o").get<double>(), ref.at("r").get<double>(), ref.at("delta").get<double>()};
            w.attended = ref.at("attended_views").get<std::vector<int>>();
            require(w.view >= 0 && w.view < n_views, ErrorCode::protocol, "bias ref names an unknown view");
            w.entries = matrix_from_tensor(decode_twtf(find_part(parts, ref.at("part").get<std::string>()).content));
            if (std::find(biases->resolutions.begin(), biases->resolutions.end(), w.resolution) ==
                biases->resolutions.end()) {
              biases->resolutions.push_back(w.resolution);
            }
            biases->per_view[w.view].push_back(std::move(w));
            return 0;
          },
          "bias_refs");
    }
    req.biases = std::move(biases);
  }
  req.validate();
  const auto shape = detail::manifest_field([&] { return m.at("shapes").at("latent"); }, "shapes");
  require(shape == detail::shape_json(req.latents[0]), ErrorCode::protocol,
          "latent parts do not match the manifest shape");
  return req;
}

/// Server side. The decode endpoint answers with the "image_" prefix.
inline MultipartBody encode_response(const DenoiseResponse& res, const std::string& uuid,
                                     const std::string& prefix = "eps_")
{
  nlohmann::json m = {{"protocol_version", kProtocolVersion},
                      {"uuid", uuid},
                      {"n_views", res.eps.size()},
                      {"backend_info", res.backend_info}};
  std::vector<WirePart> parts;
  parts.push_back({"manifest", "application/json", m.dump()});
  for (std::size_t n = 0; n < res.eps.size(); ++n) {
    parts.push_back(detail::tensor_part(prefix + std::to_string(n), to_tensor(res.eps[n])));
  }
  return encode_multipart(parts);
}

/// Client side: checks the echoed UUID and the tensor shapes against the request.
inline DenoiseResponse decode_response(const std::vector<WirePart>& parts, const DenoiseRequest& req,
                                       const std::string& prefix = "eps_")
{
  const auto m = detail::parse_manifest(parts);
  const auto uuid = detail::manifest_field([&] { return m.at("uuid").get<std::string>(); }, "uuid");
  require(uuid == req.uuid, ErrorCode::protocol, "response uuid " + uuid + " does not match request " + req.uuid);
  const int n_views = detail::manifest_field([&] { return m.at("n_views").get<int>(); }, "n_views");
  require(n_views == req.n_views(), ErrorCode::protocol,
          "response has " + std::to_string(n_views) + " views, request had " + std::to_string(req.n_views()));
  DenoiseResponse res;
  res.backend_info = m.value("backend_info", std::string{});
  for (int n = 0; n < n_views; ++n) {
    res.eps.push_back(detail::image_part(parts, prefix + std::to_string(n)));
  }
  return res;
}

}  // namespace mvtex

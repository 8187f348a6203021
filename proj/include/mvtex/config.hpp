#pragma once

// Run configuration: JSON load/save with defaults and validation.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mvtex/dilation.hpp"
#include "mvtex/error.hpp"
#include "mvtex/pipeline.hpp"
#include "mvtex/raster.hpp"

namespace mvtex {

struct DumpFlags {
  bool maps = false;
  bool biases = false;
  bool trace = false;
};

struct RunConfig {
  std::string mesh;                  // OBJ path or builtin:icosphere:<level> / builtin:cube
  std::string backend = "synthetic";  // synthetic | remote
  std::string bridge_url;            // remote only
  std::optional<std::uint64_t> seed;
  std::string output_dir = "out";
  int n_views = 8;
  double camera_distance = 2.0;
  double fov = 35.0;
  double elevation = 0.0;
  int resolution = 0;  // decoded image side; 0 accepts whatever the backend decodes to
  PipelineConfig pipeline;
  DilationParams dilation;
  DumpFlags dump;

  void validate() const
  {
    require(!mesh.empty(), ErrorCode::config, "config: mesh is required");
    require(backend == "synthetic" || backend == "remote", ErrorCode::config,
            "config: backend must be 'synthetic' or 'remote', got '" + backend + "'");
    require(backend != "remote" || !bridge_url.empty(), ErrorCode::config,
            "config: remote backend needs bridge_url (or MVTEX_BRIDGE_URL)");
    require(backend != "synthetic" || seed.has_value(), ErrorCode::config,
            "config: the synthetic backend needs a seed");
    require(n_views >= 1, ErrorCode::config, "config: n_views must be at least 1");
    require(resolution >= 0, ErrorCode::config, "config: resolution must be non-negative");
    try {
      ViewCamera{0.0, elevation, camera_distance, fov, pipeline.latent_resolution}.validate();
      pipeline.validate();
      dilation.validate();
    } catch (const Error& e) {
      fail(ErrorCode::config, std::string("config: ") + e.what());
    }
  }

  std::vector<ViewCamera> cameras() const
  {
    auto cams = make_camera_ring(n_views, camera_distance, fov, pipeline.latent_resolution);
    for (auto& c : cams) {
      c.elevation = elevation;
    }
    return cams;
  }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out)
{
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where)
{
  const std::set<std::string> keys(known.begin(), known.end());
  for (const auto& [k, v] : j.items()) {
    require(keys.count(k) > 0, ErrorCode::config, "config: unknown key '" + k + "' in " + where);
  }
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c, bool with_output_dir = true)
{
  const auto& p = c.pipeline;
  nlohmann::json j = {
      {"mesh", c.mesh},
      {"backend", c.backend},
      {"bridge_url", c.bridge_url},
      {"n_views", c.n_views},
      {"camera_distance", c.camera_distance},
      {"fov", c.fov},
      {"elevation", c.elevation},
      {"resolution", c.resolution},
      {"steps", p.steps},
      {"latent_resolution", p.latent_resolution},
      {"tex_resolution", p.tex_resolution},
      {"channels", p.channels},
      {"gamma", p.gamma},
      {"omega_min", p.omega_min},
      {"interp_steps", p.interp_steps},
      {"skip_merge_last", p.skip_merge_last},
      {"replace_attention_steps", p.replace_attention_steps},
      {"o", p.bias.o},
      {"r", p.bias.r},
      {"delta", p.bias.delta},
      {"attention_resolutions", p.attention_resolutions},
      {"attended", p.attended == AttendedMode::dense ? "dense" : "neighbors"},
      {"attended_k", p.attended_k},
      {"prompt", p.prompt},
      {"prompt_suffixes", p.prompt_suffixes},
      {"cfg_scale", p.cfg_scale},
      {"depth_epsilon", p.raster.depth_epsilon},
      {"dilation",
       {{"s", c.dilation.s},
        {"d_th", c.dilation.d_th},
        {"a_th", c.dilation.a_th},
        {"n", c.dilation.n},
        {"iter", c.dilation.iter},
        {"fallback", c.dilation.fallback}}},
      {"dump", {{"maps", c.dump.maps}, {"biases", c.dump.biases}, {"trace", c.dump.trace}}},
  };
  j["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
  if (with_output_dir) {
    j["output_dir"] = c.output_dir;
  }
  return j;
}

/// Parses a config object. Keys written by the run manifest ("hashes", "complete",
/// "version") are accepted and ignored.
inline RunConfig run_config_from_json(const nlohmann::json& j)
{
  require(j.is_object(), ErrorCode::config, "config: top level must be a JSON object");
  RunConfig c;
  try {
    detail::reject_unknown(j,
                           {"mesh", "backend", "bridge_url", "seed", "output_dir", "n_views", "camera_distance", "fov",
                            "elevation", "resolution", "steps", "latent_resolution", "tex_resolution", "channels",
                            "gamma", "omega_min", "interp_steps", "skip_merge_last", "replace_attention_steps", "o",
                            "r", "delta", "attention_resolutions", "attended", "attended_k", "prompt",
                            "prompt_suffixes", "cfg_scale", "depth_epsilon", "dilation", "dump", "hashes",
                            "complete", "version"},
                           "top level");
    auto& p = c.pipeline;
    detail::read_opt(j, "mesh", c.mesh);
    detail::read_opt(j, "backend", c.backend);
    detail::read_opt(j, "bridge_url", c.bridge_url);
    if (j.contains("seed") && !j["seed"].is_null()) {
      require(j["seed"].is_number_unsigned(), ErrorCode::config, "config: seed must be a non-negative integer");
      c.seed = j["seed"].get<std::uint64_t>();
    }
    detail::read_opt(j, "output_dir", c.output_dir);
    detail::read_opt(j, "n_views", c.n_views);
    detail::read_opt(j, "camera_distance", c.camera_distance);
    detail::read_opt(j, "fov", c.fov);
    detail::read_opt(j, "elevation", c.elevation);
    detail::read_opt(j, "resolution", c.resolution);
    detail::read_opt(j, "steps", p.steps);
    detail::read_opt(j, "latent_resolution", p.latent_resolution);
    detail::read_opt(j, "tex_resolution", p.tex_resolution);
    detail::read_opt(j, "channels", p.channels);
    detail::read_opt(j, "gamma", p.gamma);
    detail::read_opt(j, "omega_min", p.omega_min);
    detail::read_opt(j, "interp_steps", p.interp_steps);
    detail::read_opt(j, "skip_merge_last", p.skip_merge_last);
    detail::read_opt(j, "replace_attention_steps", p.replace_attention_steps);
    detail::read_opt(j, "o", p.bias.o);
    detail::read_opt(j, "r", p.bias.r);
    detail::read_opt(j, "delta", p.bias.delta);
    detail::read_opt(j, "attention_resolutions", p.attention_resolutions);
    if (j.contains("attended")) {
      const auto mode = j["attended"].get<std::string>();
      require(mode == "dense" || mode == "neighbors", ErrorCode::config,
              "config: attended must be 'dense' or 'neighbors'");
      p.attended = mode == "dense" ? AttendedMode::dense : AttendedMode::neighbors;
    }
    detail::read_opt(j, "attended_k", p.attended_k);
    detail::read_opt(j, "prompt", p.prompt);
    detail::read_opt(j, "prompt_suffixes", p.prompt_suffixes);
    detail::read_opt(j, "cfg_scale", p.cfg_scale);
    detail::read_opt(j, "depth_epsilon", p.raster.depth_epsilon);
    if (j.contains("dilation")) {
      const auto& d = j["dilation"];
      detail::reject_unknown(d, {"s", "d_th", "a_th", "n", "iter", "fallback"}, "dilation");
      detail::read_opt(d, "s", c.dilation.s);
      detail::read_opt(d, "d_th", c.dilation.d_th);
      detail::read_opt(d, "a_th", c.dilation.a_th);
      detail::read_opt(d, "n", c.dilation.n);
      detail::read_opt(d, "iter", c.dilation.iter);
      detail::read_opt(d, "fallback", c.dilation.fallback);
    }
    if (j.contains("dump")) {
      const auto& d = j["dump"];
      detail::reject_unknown(d, {"maps", "biases", "trace"}, "dump");
      detail::read_opt(d, "maps", c.dump.maps);
      detail::read_opt(d, "biases", c.dump.biases);
      detail::read_opt(d, "trace", c.dump.trace);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("config: ") + e.what());
  }
  return c;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path, ErrorCode code)
{
  std::ifstream in(path);
  require(static_cast<bool>(in), code, "cannot open " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  require(!j.is_discarded(), code, path.string() + " is not valid JSON");
  return j;
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
  return run_config_from_json(read_json_file(path, ErrorCode::config));
}

}  // namespace mvtex

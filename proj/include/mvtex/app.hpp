#pragma once

// Command implementations behind the CLI: run (with manifest replay), bake, dump-bias
// and dilate. Every failure surfaces as a StagedError naming the stage it came from.

#include <json.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "mvtex/attention.hpp"
#include "mvtex/config.hpp"
#include "mvtex/denoiser.hpp"
#include "mvtex/dilation.hpp"
#include "mvtex/error.hpp"
#include "mvtex/finalize.hpp"
#include "mvtex/mesh.hpp"
#include "mvtex/pipeline.hpp"
#include "mvtex/png_io.hpp"
#include "mvtex/primitives.hpp"
#include "mvtex/remote.hpp"
#include "mvtex/tensor_io.hpp"
#include "mvtex/wire.hpp"

namespace mvtex {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kBridgeEnv = "MVTEX_BRIDGE_URL";

class StagedError : public Error {
public:
  StagedError(std::string stage, ErrorCode code, const std::string& message)
      : Error(code, message), stage_(std::move(stage))
  {
  }

  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

/// Process exit status for a failed command.
inline int exit_code(const StagedError& e)
{
  if (e.code() == ErrorCode::manifest_mismatch) {
    return 6;
  }
  if (e.stage() == "config") {
    return 4;
  }
  if (e.stage() == "mesh-core") {
    return 2;
  }
  if (e.stage() == "backend") {
    return 3;
  }
  return 5;
}

inline nlohmann::json error_json(const StagedError& e)
{
  return {{"stage", e.stage()}, {"code", std::string(to_string(e.code()))}, {"message", e.what()}};
}

/// Runs `f`, tagging any library error with `stage`. Backend-side codes are reported
/// under the backend stage wherever they surface.
template <typename F>
decltype(auto) staged(const std::string& stage, F&& f)
{
  try {
    return f();
  } catch (const StagedError&) {
    throw;
  } catch (const Error& e) {
    const bool backend_code =
        e.code() == ErrorCode::transport || e.code() == ErrorCode::protocol || e.code() == ErrorCode::backend;
    throw StagedError(backend_code ? "backend" : stage, e.code(), e.what());
  } catch (const std::exception& e) {
    throw StagedError(stage, ErrorCode::io, e.what());
  }
}

/// "builtin:icosphere:<level>", "builtin:cube" or an OBJ path (normalised to the unit box).
inline Mesh load_mesh_spec(const std::string& spec)
{
  const std::string prefix = "builtin:";
  if (spec.rfind(prefix, 0) == 0) {
    const auto name = spec.substr(prefix.size());
    if (name == "cube") {
      return make_cube();
    }
    if (name.rfind("icosphere", 0) == 0) {
      int level = 3;
      if (name.size() > 9) {
        require(name[9] == ':', ErrorCode::parse, "bad builtin mesh '" + spec + "'");
        try {
          level = std::stoi(name.substr(10));
        } catch (const std::exception&) {
          fail(ErrorCode::parse, "bad icosphere level in '" + spec + "'");
        }
      }
      require(level >= 0 && level <= 6, ErrorCode::parameter_domain, "icosphere level must be in [0, 6]");
      return make_icosphere(level);
    }
    fail(ErrorCode::parse, "unknown builtin mesh '" + spec + "'");
  }
  return normalize_mesh(load_obj(spec));
}

inline std::string sha256_hex(const std::string& bytes)
{
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) == 1, ErrorCode::io,
          "sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) {
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return out.str();
}

inline std::string read_file(const fs::path& path)
{
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

inline void write_json(const fs::path& path, const nlohmann::json& j)
{
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  require(static_cast<bool>(out), ErrorCode::io, "write failed for " + path.string());
}

inline nlohmann::json camera_to_json(const ViewCamera& c)
{
  return {{"azimuth", c.azimuth},
          {"elevation", c.elevation},
          {"distance", c.distance},
          {"fov", c.fov},
          {"resolution", c.resolution}};
}

inline std::vector<ViewCamera> cameras_from_json(const nlohmann::json& j)
{
  require(j.is_array(), ErrorCode::parse, "camera manifest must be a JSON array");
  std::vector<ViewCamera> out;
  try {
    for (const auto& c : j) {
      ViewCamera cam{c.at("azimuth").get<double>(), c.value("elevation", 0.0), c.value("distance", 2.0),
                     c.value("fov", 35.0), c.at("resolution").get<int>()};
      cam.validate();
      out.push_back(cam);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("camera manifest: ") + e.what());
  }
  return out;
}

inline nlohmann::json dilation_json(const DilationReport& r)
{
  return {{"filled", r.filled}, {"remaining", r.remaining}, {"iterations_used", r.iterations_used}};
}

/// Loads an image from PNG (RGB in [0, 1]) or TWTF ([H, W, C]).
inline Image load_image(const fs::path& path)
{
  if (path.extension() == ".twtf") {
    return grid_from_tensor<float>(load_twtf(path));
  }
  return read_png_rgb(path);
}

inline std::unique_ptr<DenoiseBackend> make_backend(const RunConfig& cfg)
{
  if (cfg.backend == "remote") {
    auto remote = std::make_unique<RemoteDenoiser>(RemoteOptions{cfg.bridge_url});
    remote->health();
    return remote;
  }
  return std::make_unique<SyntheticDenoiser>(position_ramp());
}

/// Records written artifacts and their hashes, keyed by path relative to the run root.
class ArtifactLog {
public:
  explicit ArtifactLog(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const noexcept { return root_; }

  fs::path path(const std::string& rel) const { return root_ / rel; }

  void add(const std::string& rel) { hashes_[rel] = sha256_file(root_ / rel); }

  const std::map<std::string, std::string>& hashes() const noexcept { return hashes_; }

  nlohmann::json manifest(const RunConfig& cfg, bool complete) const
  {
    auto j = to_json(cfg, false);
    j["version"] = kManifestVersion;
    j["hashes"] = hashes_;
    j["complete"] = complete;
    return j;
  }

private:
  fs::path root_;
  std::map<std::string, std::string> hashes_;
};

struct RunReport {
  fs::path output_dir;
  nlohmann::json manifest;
  DilationReport dilation;
  PipelineResult pipeline;
  LatentTexture texture;
};

namespace detail {

inline void write_texture(ArtifactLog& log, const LatentTexture& tex)
{
  save_twtf(log.path("texture.twtf"), to_tensor(tex.data));
  log.add("texture.twtf");
  write_png(log.path("texture.png"), tex.data);
  log.add("texture.png");
}

inline nlohmann::json trace_json(const std::vector<StepTrace>& trace)
{
  auto out = nlohmann::json::array();
  for (const auto& s : trace) {
    out.push_back({{"step_index", s.step_index},
                   {"t", s.t},
                   {"merged", s.merged},
                   {"mode", std::string(to_string(s.mode))},
                   {"omegas", s.omegas},
                   {"merged_texels", s.merged_texels}});
  }
  return out;
}

inline void dump_maps(ArtifactLog& log, const BakeGeometry& g)
{
  fs::create_directories(log.path("maps"));
  for (std::size_t n = 0; n < g.views.size(); ++n) {
    const auto& m = g.views[n].maps;
    const auto base = "maps/view_" + std::to_string(n) + "_";
    const std::pair<const char*, const Image*> layers[] = {
        {"position", &m.position}, {"normal", &m.normal}, {"depth", &m.depth}, {"cosine", &m.cosine}};
    for (const auto& [name, img] : layers) {
      save_twtf(log.path(base + name + ".twtf"), to_tensor(*img));
      log.add(base + name + ".twtf");
    }
    Image fg(m.fg_mask.width(), m.fg_mask.height(), 1);
    for (std::size_t i = 0; i < fg.size(); ++i) {
      fg.data()[i] = m.fg_mask.data()[i];
    }
    write_png(log.path(base + "mask.png"), fg);
    log.add(base + "mask.png");
  }
}

inline void dump_biases(ArtifactLog& log, const ViewBiases& biases)
{
  fs::create_directories(log.path("biases"));
  for (const auto& per_res : biases.per_view) {
    for (const auto& w : per_res) {
      const auto base = "biases/" + bias_part_name(w.view, w.resolution);
      save_twtf(log.path(base + ".twtf"), to_tensor(w.entries));
      log.add(base + ".twtf");
      write_json(log.path(base + ".json"), bias_sidecar(w));
      log.add(base + ".json");
    }
  }
}

}  // namespace detail

/// Full run: diffusion, decode, bake, dilation and artifacts. On a failure after the
/// output directory exists, the manifest is still written with complete = false.
inline RunReport run(RunConfig cfg)
{
  staged("config", [&] {
    if (cfg.backend == "remote" && cfg.bridge_url.empty()) {
      if (const char* env = std::getenv(kBridgeEnv)) {
        cfg.bridge_url = env;
      }
    }
    cfg.validate();
  });
  const Mesh mesh = staged("mesh-core", [&] { return load_mesh_spec(cfg.mesh); });
  auto backend = staged("backend", [&] { return make_backend(cfg); });

  RunReport report;
  report.output_dir = cfg.output_dir;
  staged("io", [&] { fs::create_directories(report.output_dir); });
  ArtifactLog log(report.output_dir);
  try {
    PipelineConfig pcfg = cfg.pipeline;
    pcfg.seed = *cfg.seed;
    const auto cams = cfg.cameras();
    report.pipeline = staged("pipeline", [&] { return run_pipeline(mesh, cams, *backend, pcfg); });
    const auto images = staged("backend", [&] {
      auto imgs = backend->decode(report.pipeline.latents);
      require(imgs.size() == cams.size(), ErrorCode::backend, "decoder returned the wrong number of images");
      for (const auto& img : imgs) {
        require(img.width() == img.height() && img.width() > 0, ErrorCode::backend, "decoded images must be square");
        require(cfg.resolution == 0 || img.width() == cfg.resolution, ErrorCode::backend,
                "decoded image side " + std::to_string(img.width()) + " differs from the configured resolution " +
                    std::to_string(cfg.resolution));
      }
      return imgs;
    });
    std::vector<ViewCamera> image_cams;
    for (std::size_t n = 0; n < cams.size(); ++n) {
      image_cams.push_back(cams[n].with_resolution(images[n].width()));
    }
    const auto fin = staged("texture-finalize", [&] {
      return merge_final_textures(images, mesh, image_cams, pcfg.gamma, pcfg.omega_min, pcfg.tex_resolution,
                                  pcfg.raster);
    });
    const auto done =
        staged("texture-finalize", [&] { return finish_texture(fin.merged, fin.geometry.uvmaps, mesh, cfg.dilation); });
    report.dilation = done.dilation.report;
    report.texture = done.texture;

    staged("io", [&] {
      detail::write_texture(log, done.texture);
      fs::create_directories(log.path("views"));
      auto cams_json = nlohmann::json::array();
      for (std::size_t n = 0; n < images.size(); ++n) {
        const auto rel = "views/view_" + std::to_string(n) + ".png";
        write_png(log.path(rel), images[n]);
        log.add(rel);
        cams_json.push_back(camera_to_json(image_cams[n]));
      }
      write_json(log.path("cameras.json"), cams_json);
      log.add("cameras.json");
      write_json(log.path("dilation.json"), dilation_json(report.dilation));
      log.add("dilation.json");
      if (cfg.dump.maps || cfg.dump.biases) {
        const auto prep = prepare_views(mesh, cams, pcfg);
        if (cfg.dump.maps) {
          detail::dump_maps(log, prep.geometry);
        }
        if (cfg.dump.biases) {
          detail::dump_biases(log, *prep.biases);
        }
      }
      if (cfg.dump.trace) {
        write_json(log.path("trace.json"), detail::trace_json(report.pipeline.trace));
        log.add("trace.json");
      }
      report.manifest = log.manifest(cfg, true);
      write_json(log.path("manifest.json"), report.manifest);
    });
  } catch (const StagedError& e) {
    auto partial = log.manifest(cfg, false);
    partial["error"] = error_json(e);
    try {
      write_json(log.path("manifest.json"), partial);
    } catch (const Error&) {
    }
    throw;
  }
  return report;
}

/// Replays a manifest into `output_dir` and checks every recorded hash.
inline RunReport verify_manifest(const fs::path& manifest_path, const fs::path& output_dir)
{
  const auto m = staged("config", [&] { return read_json_file(manifest_path, ErrorCode::config); });
  auto cfg = staged("config", [&] {
    require(m.contains("hashes") && m["hashes"].is_object(), ErrorCode::config,
            manifest_path.string() + " is not a run manifest (no hashes)");
    require(m.value("complete", false), ErrorCode::config, "manifest records an incomplete run");
    return run_config_from_json(m);
  });
  cfg.output_dir = output_dir.string();
  auto report = run(cfg);
  std::vector<std::string> diffs;
  const auto& got = report.manifest["hashes"];
  for (const auto& [file, hash] : m["hashes"].items()) {
    if (!got.contains(file)) {
      diffs.push_back(file + " (missing)");
    } else if (got[file] != hash) {
      diffs.push_back(file);
    }
  }
  for (const auto& [file, hash] : got.items()) {
    if (!m["hashes"].contains(file)) {
      diffs.push_back(file + " (unexpected)");
    }
  }
  if (!diffs.empty()) {
    std::string list;
    for (const auto& d : diffs) {
      list += (list.empty() ? "" : ", ") + d;
    }
    throw StagedError("verify", ErrorCode::manifest_mismatch, "replay differs from manifest: " + list);
  }
  return report;
}

struct BakeOptions {
  std::string mesh;
  std::vector<fs::path> images;
  fs::path cameras;  // JSON array, one entry per image
  int tex_resolution = 64;
  double gamma = 8.0;
  double omega_min = 1e-3;
  DilationParams dilation;
  RasterOptions raster;
  fs::path output_dir = "bake";
};

struct BakeReport {
  LatentTexture merged;
  LatentTexture texture;
  DilationReport dilation;
};

/// Final-texture stage on its own: merge the given images and dilate.
inline BakeReport bake_only(const BakeOptions& opt)
{
  const Mesh mesh = staged("mesh-core", [&] { return load_mesh_spec(opt.mesh); });
  const auto cams = staged("config", [&] { return cameras_from_json(read_json_file(opt.cameras, ErrorCode::config)); });
  std::vector<Image> images;
  staged("io", [&] {
    for (const auto& p : opt.images) {
      images.push_back(load_image(p));
    }
  });
  BakeReport out;
  const auto fin = staged("texture-finalize", [&] {
    return merge_final_textures(images, mesh, cams, opt.gamma, opt.omega_min, opt.tex_resolution, opt.raster);
  });
  const auto done =
      staged("texture-finalize", [&] { return finish_texture(fin.merged, fin.geometry.uvmaps, mesh, opt.dilation); });
  out.merged = fin.merged;
  out.texture = done.texture;
  out.dilation = done.dilation.report;
  staged("io", [&] {
    fs::create_directories(opt.output_dir);
    ArtifactLog log(opt.output_dir);
    detail::write_texture(log, out.texture);
    write_json(log.path("dilation.json"), dilation_json(out.dilation));
  });
  return out;
}

struct DumpBiasOptions {
  std::string mesh;
  int n_views = 8;
  double camera_distance = 2.0;
  double fov = 35.0;
  double elevation = 0.0;
  int latent_resolution = 64;
  int resolution = 16;  // attention grid side
  BiasParams params;
  AttendedMode attended = AttendedMode::dense;
  int attended_k = 1;
  int view = 0;
  int patch = 0;  // query row for the heatmap
  fs::path output_dir = "bias";
};

struct DumpBiasReport {
  BiasMatrix bias;
  DistanceMatrix distance;
  Image heatmap;  // resolution x (resolution * attended views)
};

/// Heatmap of one bias row with the attended views side by side. Masked entries are 0,
/// the rest map [ln delta, 0] onto [0.1, 1].
inline Image bias_heatmap(const BiasMatrix& w, int patch, int res)
{
  require(patch >= 0 && patch < w.entries.rows(), ErrorCode::out_of_range,
          "patch " + std::to_string(patch) + " outside [0, " + std::to_string(w.entries.rows()) + ")");
  const int views = static_cast<int>(w.entries.cols() / (res * res));
  const double lo = std::log(w.params.delta);
  Image img(res * views, res, 1);
  const auto row = w.entries.row(patch);
  for (int k = 0; k < views; ++k) {
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        const float v = row[static_cast<std::size_t>(k) * res * res + y * res + x];
        img(k * res + x, y) = is_masked(v) ? 0.0f : static_cast<float>(0.1 + 0.9 * (v - lo) / -lo);
      }
    }
  }
  return img;
}

inline DumpBiasReport dump_bias(const DumpBiasOptions& opt)
{
  const Mesh mesh = staged("mesh-core", [&] { return load_mesh_spec(opt.mesh); });
  DumpBiasReport out;
  staged("attn-bias", [&] {
    require(opt.view >= 0 && opt.view < opt.n_views, ErrorCode::out_of_range, "view index out of range");
    require(opt.resolution > 0 && opt.latent_resolution % opt.resolution == 0, ErrorCode::resolution_mismatch,
            "attention resolution must divide the latent resolution");
    auto cams = make_camera_ring(opt.n_views, opt.camera_distance, opt.fov, opt.latent_resolution);
    std::vector<RenderedMaps> small;
    for (auto& c : cams) {
      c.elevation = opt.elevation;
      small.push_back(downsample_maps(render_maps(mesh, c), opt.latent_resolution / opt.resolution));
    }
    const auto attended = attended_views(opt.n_views, opt.attended, opt.attended_k)[opt.view];
    std::vector<const RenderedMaps*> keys;
    for (int v : attended) {
      keys.push_back(&small[v]);
    }
    out.distance = pairwise_distance(small[opt.view], keys);
    out.bias = attention_bias(out.distance, opt.params);
    out.bias.view = opt.view;
    out.bias.resolution = opt.resolution;
    out.bias.attended = attended;
    out.heatmap = bias_heatmap(out.bias, opt.patch, opt.resolution);
  });
  staged("io", [&] {
    fs::create_directories(opt.output_dir);
    const auto base = bias_part_name(opt.view, opt.resolution);
    save_twtf(opt.output_dir / (base + ".twtf"), to_tensor(out.bias.entries));
    save_twtf(opt.output_dir / ("distance_" + std::to_string(opt.view) + "_" + std::to_string(opt.resolution) + ".twtf"),
              to_tensor(out.distance.entries));
    auto side = bias_sidecar(out.bias);
    side["patch"] = opt.patch;
    side["query_fg"] = out.distance.q_fg;
    side["key_fg"] = out.distance.k_fg;
    write_json(opt.output_dir / (base + ".json"), side);
    write_png(opt.output_dir / ("heatmap_" + std::to_string(opt.view) + "_" + std::to_string(opt.resolution) + "_p" +
                                std::to_string(opt.patch) + ".png"),
              out.heatmap);
  });
  return out;
}

struct DilateOptions {
  std::string mesh;
  fs::path texture;  // TWTF [H, W, C]
  fs::path valid;    // optional TWTF [H, W, 1], nonzero = valid
  DilationParams params;
  fs::path output_dir = "dilate";
};

struct DilateReport {
  DilationResult result;
};

/// Algorithm-only entry point. Without a validity file, chart texels with any nonzero
/// channel count as valid.
inline DilateReport dilate_only(const DilateOptions& opt)
{
  const Mesh mesh = staged("mesh-core", [&] { return load_mesh_spec(opt.mesh); });
  LatentTexture tex;
  staged("io", [&] {
    const Image data = grid_from_tensor<float>(load_twtf(opt.texture));
    require(data.width() == data.height(), ErrorCode::shape_mismatch, "texture must be square");
    tex = LatentTexture(data.width(), data.channels());
    tex.data = data;
    if (!opt.valid.empty()) {
      const Image v = grid_from_tensor<float>(load_twtf(opt.valid));
      require(v.same_extent(data) && v.channels() == 1, ErrorCode::shape_mismatch,
              "validity map must be [H, W, 1] matching the texture");
      for (std::size_t i = 0; i < v.size(); ++i) {
        tex.valid.data()[i] = v.data()[i] != 0.0f;
      }
    } else {
      for (std::size_t i = 0; i < data.pixel_count(); ++i) {
        const auto px = data.pixel(i);
        tex.valid.data()[i] = std::any_of(px.begin(), px.end(), [](float x) { return x != 0.0f; });
      }
    }
  });
  DilateReport out;
  staged("texture-finalize", [&] {
    const auto uvmaps = render_uv_space_maps(mesh, tex.resolution());
    for (std::size_t i = 0; i < uvmaps.face_id.size(); ++i) {
      if (uvmaps.face_id.data()[i] == kNoFace) {
        tex.valid.data()[i] = 0;
      }
    }
    out.result = dilate(tex, uvmaps, build_sub_islands(uvmaps.face_id, mesh, opt.params.s), opt.params);
  });
  staged("io", [&] {
    fs::create_directories(opt.output_dir);
    ArtifactLog log(opt.output_dir);
    detail::write_texture(log, out.result.texture);
    Image unfilled(out.result.unfilled.width(), out.result.unfilled.height(), 1);
    for (std::size_t i = 0; i < unfilled.size(); ++i) {
      unfilled.data()[i] = out.result.unfilled.data()[i];
    }
    write_png(log.path("unfilled.png"), unfilled);
    write_json(log.path("dilation.json"), dilation_json(out.result.report));
  });
  return out;
}

}  // namespace mvtex

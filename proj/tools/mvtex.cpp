// mvtex: multi-view texture synthesis driver.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mvtex/app.hpp"

namespace {

using mvtex::StagedError;

struct RunFlags {
  std::string config;
  bool verify = false;
  std::optional<std::string> mesh;
  std::optional<std::string> backend;
  std::optional<std::string> bridge_url;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> prompt;
  std::optional<int> steps;
  std::optional<int> n_views;
  std::optional<int> latent_resolution;
  std::optional<int> tex_resolution;
  std::optional<double> gamma;
  std::optional<double> omega_min;
  bool dump_maps = false;
  bool dump_biases = false;
  bool dump_trace = false;
};

template <typename T>
void apply(const std::optional<T>& v, T& out)
{
  if (v) {
    out = *v;
  }
}

mvtex::RunConfig build_config(const RunFlags& f)
{
  mvtex::RunConfig cfg;
  if (!f.config.empty()) {
    cfg = mvtex::staged("config", [&] { return mvtex::load_run_config(f.config); });
  }
  apply(f.mesh, cfg.mesh);
  apply(f.backend, cfg.backend);
  apply(f.bridge_url, cfg.bridge_url);
  if (f.seed) {
    cfg.seed = *f.seed;
  }
  apply(f.output, cfg.output_dir);
  apply(f.prompt, cfg.pipeline.prompt);
  apply(f.steps, cfg.pipeline.steps);
  apply(f.n_views, cfg.n_views);
  apply(f.latent_resolution, cfg.pipeline.latent_resolution);
  apply(f.tex_resolution, cfg.pipeline.tex_resolution);
  apply(f.gamma, cfg.pipeline.gamma);
  apply(f.omega_min, cfg.pipeline.omega_min);
  cfg.dump.maps = cfg.dump.maps || f.dump_maps;
  cfg.dump.biases = cfg.dump.biases || f.dump_biases;
  cfg.dump.trace = cfg.dump.trace || f.dump_trace;
  return cfg;
}

void add_dilation_flags(CLI::App* cmd, mvtex::DilationParams& p)
{
  cmd->add_option("--grid", p.s, "sub-island grid size in texels")->capture_default_str();
  cmd->add_option("--d-th", p.d_th, "dilation distance threshold")->capture_default_str();
  cmd->add_option("--a-th", p.a_th, "dilation angle threshold in degrees")->capture_default_str();
  cmd->add_option("--knn", p.n, "neighbours per query")->capture_default_str();
  cmd->add_option("--iter", p.iter, "dilation passes")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"mvtex: multi-view diffusion texturing"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "full texturing run");
  run->add_option("--config", rf.config, "JSON config or a run manifest");
  run->add_flag("--verify", rf.verify, "replay --config as a manifest and compare hashes");
  run->add_option("--mesh", rf.mesh, "OBJ path, builtin:icosphere:<level> or builtin:cube");
  run->add_option("--backend", rf.backend, "synthetic | remote");
  run->add_option("--bridge-url", rf.bridge_url, "denoiser bridge (default $MVTEX_BRIDGE_URL)");
  run->add_option("--seed", rf.seed);
  run->add_option("--output,-o", rf.output, "output directory");
  run->add_option("--prompt", rf.prompt);
  run->add_option("--steps", rf.steps);
  run->add_option("--views", rf.n_views);
  run->add_option("--latent-res", rf.latent_resolution);
  run->add_option("--tex-res", rf.tex_resolution);
  run->add_option("--gamma", rf.gamma);
  run->add_option("--omega-min", rf.omega_min);
  run->add_flag("--dump-maps", rf.dump_maps);
  run->add_flag("--dump-biases", rf.dump_biases);
  run->add_flag("--dump-trace", rf.dump_trace);

  mvtex::BakeOptions bo;
  std::vector<std::string> bake_images;
  std::string bake_cameras;
  std::string bake_output = "bake";
  auto* bake = app.add_subcommand("bake", "merge decoded view images into a texture and dilate");
  bake->add_option("--mesh", bo.mesh)->required();
  bake->add_option("--images", bake_images, "one PNG or TWTF per camera, in camera order")->required();
  bake->add_option("--cameras", bake_cameras, "cameras.json from a run")->required();
  bake->add_option("--tex-res", bo.tex_resolution)->capture_default_str();
  bake->add_option("--gamma", bo.gamma)->capture_default_str();
  bake->add_option("--omega-min", bo.omega_min)->capture_default_str();
  bake->add_option("--output,-o", bake_output)->capture_default_str();
  add_dilation_flags(bake, bo.dilation);

  mvtex::DumpBiasOptions db;
  std::string db_output = "bias";
  std::string db_attended = "dense";
  auto* dump = app.add_subcommand("dump-bias", "write one view's attention bias and a heatmap of one row");
  dump->add_option("--mesh", db.mesh)->required();
  dump->add_option("--views", db.n_views)->capture_default_str();
  dump->add_option("--latent-res", db.latent_resolution)->capture_default_str();
  dump->add_option("--res", db.resolution, "attention grid side")->capture_default_str();
  dump->add_option("--view", db.view)->capture_default_str();
  dump->add_option("--patch", db.patch, "query patch (row) for the heatmap")->capture_default_str();
  dump->add_option("--onset", db.params.o, "bias onset distance o")->capture_default_str();
  dump->add_option("--rate", db.params.r, "bias decay rate r")->capture_default_str();
  dump->add_option("--delta", db.params.delta)->capture_default_str();
  dump->add_option("--attended", db_attended, "dense | neighbors")->check(CLI::IsMember({"dense", "neighbors"}));
  dump->add_option("--k", db.attended_k, "ring distance for neighbors")->capture_default_str();
  dump->add_option("--output,-o", db_output)->capture_default_str();

  mvtex::DilateOptions dl;
  std::string dl_texture;
  std::string dl_valid;
  std::string dl_output = "dilate";
  auto* dil = app.add_subcommand("dilate", "surface-space dilation of a texture");
  dil->add_option("--mesh", dl.mesh)->required();
  dil->add_option("--texture", dl_texture, "TWTF [H, W, C]")->required();
  dil->add_option("--valid", dl_valid, "TWTF [H, W, 1] validity map");
  dil->add_option("--output,-o", dl_output)->capture_default_str();
  add_dilation_flags(dil, dl.params);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 4;
  }

  try {
    if (*run) {
      if (rf.verify) {
        if (rf.config.empty()) {
          throw StagedError("config", mvtex::ErrorCode::config, "--verify needs --config <manifest.json>");
        }
        const auto report = mvtex::verify_manifest(rf.config, rf.output.value_or("verify"));
        std::cout << nlohmann::json{{"verified", true}, {"output_dir", report.output_dir.string()}}.dump() << '\n';
      } else {
        const auto report = mvtex::run(build_config(rf));
        std::cout << nlohmann::json{{"output_dir", report.output_dir.string()},
                                    {"dilation", mvtex::dilation_json(report.dilation)}}
                         .dump()
                  << '\n';
      }
    } else if (*bake) {
      bo.images.assign(bake_images.begin(), bake_images.end());
      bo.cameras = bake_cameras;
      bo.output_dir = bake_output;
      const auto report = mvtex::bake_only(bo);
      std::cout << nlohmann::json{{"dilation", mvtex::dilation_json(report.dilation)}}.dump() << '\n';
    } else if (*dump) {
      db.attended = db_attended == "dense" ? mvtex::AttendedMode::dense : mvtex::AttendedMode::neighbors;
      db.output_dir = db_output;
      mvtex::dump_bias(db);
    } else if (*dil) {
      dl.texture = dl_texture;
      dl.valid = dl_valid;
      dl.output_dir = dl_output;
      const auto report = mvtex::dilate_only(dl);
      std::cout << mvtex::dilation_json(report.result.report).dump() << '\n';
    }
  } catch (const StagedError& e) {
    std::cerr << mvtex::error_json(e).dump() << '\n';
    return mvtex::exit_code(e);
  }
  return 0;
}

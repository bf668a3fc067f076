#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dsdtex/config.hpp"
#include "dsdtex/pipeline.hpp"
#include "dsdtex/trainer.hpp"

using namespace dsdtex;

namespace {

constexpr int kExitConfig = 2;

struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("-c,--config", args.config_path, "YAML run configuration");
    cmd->add_option("--set", args.overrides, "Override a config key, e.g. --set train.iterations=10")->take_all();
}

RunConfig read_config(const ConfigArgs& args) {
    return args.config_path.empty() ? parse_config("", args.overrides) : load_config(args.config_path, args.overrides);
}

int run_train(const ConfigArgs& cargs, const std::optional<std::string>& mesh, const std::optional<std::string>& prompt,
              const std::optional<std::int64_t>& iterations, const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& output, const std::string& resume) {
    RunConfig cfg = read_config(cargs);
    if (mesh) cfg.mesh = *mesh;
    if (prompt) cfg.guidance.prompt = *prompt;
    if (iterations) cfg.train.iterations = *iterations;
    if (seed) cfg.train.seed = *seed;
    if (output) cfg.output_dir = *output;
    validate_config(cfg, true);

    Scene scene = build_scene(cfg);
    auto backend = make_backend(cfg);
    TrainState state = resume.empty() ? TrainState::initial(cfg.field, cfg.train.seed) : load_train_state(resume);
    std::filesystem::create_directories(cfg.output_dir);
    {
        std::ofstream os(std::filesystem::path(cfg.output_dir) / "config.yaml");
        os << config_to_yaml(cfg);
    }
    auto report = run(state, scene, *backend, cfg.guidance, cfg.train, cfg.output_dir);

    Camera preview;
    preview.radius = cfg.train.body_camera.radius;
    preview.elevation = 0.5 * (cfg.train.body_camera.elevation.lo + cfg.train.body_camera.elevation.hi);
    preview.width = preview.height = cfg.turntable.resolution;
    auto preview_path = std::filesystem::path(cfg.output_dir) / "preview.png";
    write_shaded_png(preview_path, render_field(state.field, scene, preview));

    std::printf("checkpoint %s\n", report.checkpoint.c_str());
    std::printf("checksum %s\n", checksum_hex(file_checksum(report.checkpoint)).c_str());
    std::printf("steps %lld skipped %lld\n", static_cast<long long>(report.steps), static_cast<long long>(report.skipped));
    return 0;
}

int run_bake(const ConfigArgs& cargs, const std::string& checkpoint, const std::optional<std::string>& mesh_path,
             const std::optional<int>& resolution, const std::string& output, bool vertex_fallback) {
    RunConfig cfg = read_config(cargs);
    if (mesh_path) cfg.mesh = *mesh_path;
    if (resolution) cfg.bake.resolution = *resolution;
    if (vertex_fallback) cfg.bake.vertex_fallback = true;
    if (cfg.mesh.empty()) throw ConfigError("mesh", "a mesh path is required");
    if (cfg.bake.resolution < 1) throw ConfigError("bake.resolution", "must be >= 1");

    MaterialField field = load_checkpoint(checkpoint);
    Mesh mesh = load_mesh(cfg.mesh);
    if (!mesh.has_uvs()) {
        if (!cfg.bake.vertex_fallback)
            throw MeshError("mesh '" + cfg.mesh + "' has no UVs; pass --vertex-fallback for a per-vertex bake");
        auto path = write_vertex_materials(std::filesystem::path(output) / "vertex_materials.csv", field, mesh);
        std::printf("%s\n", path.c_str());
        return 0;
    }
    auto textures = bake_textures(field, mesh, cfg.bake.resolution);
    for (const auto& p : write_textures(output, textures))
        std::printf("%s %s\n", p.c_str(), checksum_hex(file_checksum(p)).c_str());
    return 0;
}

int run_turntable(const ConfigArgs& cargs, const std::string& checkpoint, const std::optional<std::string>& mesh_path,
                  const std::optional<int>& poses, const std::optional<int>& resolution, const std::string& output) {
    RunConfig cfg = read_config(cargs);
    if (mesh_path) cfg.mesh = *mesh_path;
    if (poses) cfg.turntable.poses = *poses;
    if (resolution) cfg.turntable.resolution = *resolution;
    if (cfg.mesh.empty()) throw ConfigError("mesh", "a mesh path is required");
    if (cfg.turntable.poses < 1) throw ConfigError("turntable.poses", "must be >= 1");

    MaterialField field = load_checkpoint(checkpoint);
    if (field.config().roughness_min != cfg.shading.roughness_min) cfg.shading.roughness_min = field.config().roughness_min;
    Scene scene = build_scene(cfg);
    TurntableOptions opts;
    opts.poses = cfg.turntable.poses;
    opts.resolution = cfg.turntable.resolution;
    opts.radius = cfg.train.body_camera.radius;
    opts.elevation = 0.5 * (cfg.train.body_camera.elevation.lo + cfg.train.body_camera.elevation.hi);
    opts.fov_y = cfg.train.body_camera.fov_y;
    auto frames = render_turntable(field, scene, opts, output);
    std::printf("%zu frames in %s\n", frames.size(), output.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Material field texturing with denoised score distillation"};
    app.require_subcommand(1);

    ConfigArgs train_cfg, bake_cfg, turn_cfg, check_cfg;

    auto* train = app.add_subcommand("train", "Optimize a material field on a mesh");
    add_config_args(train, train_cfg);
    std::optional<std::string> mesh, prompt, output;
    std::optional<std::int64_t> iterations;
    std::optional<std::uint64_t> seed;
    std::string resume;
    train->add_option("--mesh", mesh, "OBJ mesh");
    train->add_option("--prompt", prompt, "Text prompt");
    train->add_option("--iterations", iterations, "Number of iterations");
    train->add_option("--seed", seed, "Random seed");
    train->add_option("-o,--output", output, "Output directory");
    train->add_option("--resume", resume, "Resume from a state.bin file");

    auto* bake = app.add_subcommand("bake", "Bake a checkpoint into UV textures");
    add_config_args(bake, bake_cfg);
    std::string bake_ckpt, bake_out = "textures";
    std::optional<std::string> bake_mesh;
    std::optional<int> bake_res;
    bool vertex_fallback = false;
    bake->add_option("checkpoint", bake_ckpt, "Checkpoint file")->required();
    bake->add_option("--mesh", bake_mesh, "OBJ mesh");
    bake->add_option("--resolution", bake_res, "Texture resolution");
    bake->add_option("-o,--output", bake_out, "Output directory");
    bake->add_flag("--vertex-fallback", vertex_fallback, "Write per-vertex materials when the mesh has no UVs");

    auto* turn = app.add_subcommand("turntable", "Render a turntable sequence");
    add_config_args(turn, turn_cfg);
    std::string turn_ckpt, turn_out = "turntable";
    std::optional<std::string> turn_mesh;
    std::optional<int> poses, turn_res;
    turn->add_option("checkpoint", turn_ckpt, "Checkpoint file")->required();
    turn->add_option("--mesh", turn_mesh, "OBJ mesh");
    turn->add_option("--poses", poses, "Number of frames");
    turn->add_option("--resolution", turn_res, "Frame size in pixels");
    turn->add_option("-o,--output", turn_out, "Output directory");

    auto* check = app.add_subcommand("validate-config", "Validate a config and print it with defaults filled in");
    add_config_args(check, check_cfg);
    bool check_files = false;
    check->add_flag("--check-files", check_files, "Also require referenced files to exist");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return run_train(train_cfg, mesh, prompt, iterations, seed, output, resume);
        if (*bake) return run_bake(bake_cfg, bake_ckpt, bake_mesh, bake_res, bake_out, vertex_fallback);
        if (*turn) return run_turntable(turn_cfg, turn_ckpt, turn_mesh, poses, turn_res, turn_out);
        if (*check) {
            RunConfig cfg = read_config(check_cfg);
            validate_config(cfg, check_files);
            std::cout << config_to_yaml(cfg);
            return 0;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n%s", e.what(), app.help().c_str());
        return kExitConfig;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dsdtex/config.hpp"
#include "dsdtex/material_field.hpp"
#include "dsdtex/trainer.hpp"

namespace dsdtex {

// Loads the mesh and environment and prefilters the lighting.
Scene build_scene(const RunConfig& config);
// Constant-radiance environment prefiltered with `shading`.
EnvironmentLight constant_environment(const ShadingConfig& shading, double radiance = 1.0);

// Analytic backend images match the training resolution. The prompt and its face
// variant are bound to the target color; the negative prompt to `negative` when set.
std::unique_ptr<GuidanceBackend> make_backend(const RunConfig& config);
LocalBackend make_analytic_backend(const AnalyticConfig& analytic, const GuidanceConfig& guidance, int resolution);

struct BakedTextures {
    int resolution = 0;
    // Row-major, row 0 at v = 1.
    std::vector<MaterialSample> texels;
    std::vector<std::uint8_t> covered;
};

// Rasterizes the UV chart; each covered texel evaluates the field at its surface
// point and uncovered texels copy their nearest covered neighbour.
BakedTextures bake_textures(const MaterialField& field, const Mesh& mesh, int resolution);
// kd.png (sRGB), roughness.png and metallic.png (linear gray), specular.png (linear RGB).
std::vector<std::filesystem::path> write_textures(const std::filesystem::path& dir, const BakedTextures& textures);
// One CSV row per vertex: x y z (normalized frame), kd rgb, roughness, metallic, ks rgb.
std::filesystem::path write_vertex_materials(const std::filesystem::path& path, const MaterialField& field,
                                             const Mesh& mesh);

struct TurntableOptions {
    int poses = 100;
    int resolution = 256;
    double radius = 3.0;
    double elevation = 0.0;
    double fov_y = 0.7853981633974483;
};

Camera turntable_camera(const TurntableOptions& options, int index);
// Writes frame_000.png, frame_001.png, ... rendering frames in parallel.
std::vector<std::filesystem::path> render_turntable(const MaterialField& field, const Scene& scene,
                                                    const TurntableOptions& options,
                                                    const std::filesystem::path& output_dir);

std::uint64_t fnv1a64(std::span<const char> bytes);
std::uint64_t file_checksum(const std::filesystem::path& path);
std::string checksum_hex(std::uint64_t value);

}  // namespace dsdtex

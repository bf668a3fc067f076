#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dsdtex/autodiff.hpp"
#include "dsdtex/geometry.hpp"
#include "dsdtex/material_field.hpp"
#include "dsdtex/rasterizer.hpp"

namespace dsdtex {

// Six square faces of linear RGB radiance in the order +X, -X, +Y, -Y, +Z, -Z
// (OpenGL convention, row 0 at the top of each face).
struct CubeMap {
    int size = 0;
    std::array<std::vector<Vec3>, 6> faces;

    static CubeMap constant(int size, const Vec3& radiance);

    Vec3& texel(int face, int x, int y) { return faces[face][static_cast<std::size_t>(y) * size + x]; }
    const Vec3& texel(int face, int x, int y) const { return faces[face][static_cast<std::size_t>(y) * size + x]; }
    // Unit direction through the center of texel (x, y) on `face`.
    Vec3 direction(int face, int x, int y) const;
    // Bilinear within the face the direction selects; clamps at face borders.
    Vec3 sample(const Vec3& dir) const;
    CubeMap downsampled() const;
    CubeMap scaled(double s) const;
};

inline constexpr std::array<const char*, 6> kCubeFaceNames{"px", "nx", "py", "ny", "pz", "nz"};

// Loads `<dir>/{px,nx,py,ny,pz,nz}.{hdr,png}`. PNG faces are decoded from sRGB.
CubeMap load_cube_map(const std::filesystem::path& dir);

struct ShadingConfig {
    int face_size = 32;
    int mip_levels = 5;
    int lut_size = 64;
    int prefilter_samples = 1024;
    int lut_samples = 1024;
    double roughness_min = 0.08;
    void validate() const;
    bool operator==(const ShadingConfig&) const = default;
};

// Split-sum lighting. mips[k] is GGX-prefiltered for roughness_of_mip(k), an even
// grid over [roughness_min, 1]. The LUT is indexed [cos_view_row * lut_size + roughness_col]
// with cos_view_row = j/(lut_size-1) and the same even roughness grid.
struct EnvironmentLight {
    CubeMap radiance;
    std::vector<CubeMap> mips;
    // Cosine-weighted mean radiance (irradiance / pi) at the deepest mip resolution.
    CubeMap irradiance;
    int lut_size = 0;
    std::vector<double> lut_scale;
    std::vector<double> lut_bias;
    double roughness_min = 0.08;

    double roughness_of_mip(int k) const;
    double lut_roughness(int col) const;
    double lut_cos_view(int row) const;
};

EnvironmentLight prefilter(const CubeMap& environment, const ShadingConfig& config);

// BRDF pieces. Alpha is roughness squared.
double ggx_distribution(double n_dot_h, double alpha);
Vec3 schlick_fresnel(double v_dot_h, const Vec3& f0);
// Height-correlated Smith masking-shadowing G2.
double smith_g2(double n_dot_v, double n_dot_l, double alpha);

Vec3 eval_diffuse(const Vec3& albedo);
// D F G / (4 (n.l)(n.v)), both cosines clamped below at 1e-4.
Vec3 eval_specular(const Vec3& n, const Vec3& v, const Vec3& l, double roughness, const Vec3& specular);

// Split-sum (scale, bias) for one (cos_view, roughness) pair by GGX importance sampling.
std::array<double, 2> integrate_brdf(double n_dot_v, double roughness, int samples);

// Per-hit-pixel lighting constants for a fixed view; they carry no gradient.
struct PixelLighting {
    std::vector<std::size_t> pixel_index;  // into the gbuffer
    std::vector<Vec3> unit_points;          // field query points
    ad::Tensor irradiance;                  // [N, 3]
    ad::Tensor prefiltered;                 // [N, mips, 3]
    ad::Tensor lut_scale;                   // [N, lut, 1]
    ad::Tensor lut_bias;                    // [N, lut, 1]
    std::size_t count() const { return pixel_index.size(); }
};

PixelLighting gather_lighting(const GBuffer& gbuffer, const EnvironmentLight& env, const Camera& camera);

struct MaterialNodes {
    ad::NodeId albedo;     // [N, 3]
    ad::NodeId roughness;  // [N, 1]
    ad::NodeId specular;   // [N, 3]
};

// Outgoing radiance [N, 3]: albedo * irradiance/pi + prefiltered(R, roughness) * (k_s * scale + bias).
ad::NodeId shade_graph(ad::Graph& graph, const PixelLighting& lighting, const MaterialNodes& material,
                       double roughness_min);

struct ShadedImage {
    int width = 0;
    int height = 0;
    std::vector<Vec3> radiance;
    std::vector<std::uint8_t> alpha;
};

// `materials` holds one sample per hit pixel in gbuffer order.
ShadedImage shade(const GBuffer& gbuffer, std::span<const MaterialSample> materials, const EnvironmentLight& env,
                  const Camera& camera, const Vec3& background = Vec3::Ones());

// Writes radiance as an 8-bit sRGB PNG (RGBA when `with_alpha`).
void write_shaded_png(const std::filesystem::path& path, const ShadedImage& image, bool with_alpha = false);

}  // namespace dsdtex

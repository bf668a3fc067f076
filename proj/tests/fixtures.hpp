#pragma once

#include <algorithm>
#include <cmath>

#include "dsdtex/config.hpp"
#include "dsdtex/image_io.hpp"
#include "dsdtex/pipeline.hpp"
#include "dsdtex/trainer.hpp"
#include "support.hpp"

namespace dsdtex::testing {

inline ShadingConfig fast_shading() {
    ShadingConfig c;
    c.face_size = 8;
    c.mip_levels = 3;
    c.lut_size = 16;
    c.prefilter_samples = 64;
    c.lut_samples = 128;
    return c;
}

inline FieldConfig small_field() {
    FieldConfig c;
    c.encoding.levels = 4;
    c.encoding.log2_table_size = 10;
    c.encoding.max_resolution = 64;
    return c;
}

// Unit sphere under constant white light.
inline Scene sphere_scene(const ShadingConfig& shading = fast_shading()) {
    Scene s;
    s.mesh = uv_sphere();
    s.environment = constant_environment(shading);
    return s;
}

struct BakeAgreement {
    double kd = 0.0;
    double roughness = 0.0;
    double metallic = 0.0;
    double specular = 0.0;
    // Largest gap between specular.png and m * kd + (1 - m) * 0.04 from the oracle kd and m.
    double specular_formula = 0.0;
    std::size_t texels = 0;
};

// Compares PNGs written by write_textures in `dir` against the field evaluated at each
// covered texel's surface point, located by an independent search over UV triangles.
inline BakeAgreement compare_bake_with_field(const MaterialField& field, const Mesh& mesh, int resolution,
                                             const std::filesystem::path& dir) {
    Image kd = read_png(dir / "kd.png"), rough = read_png(dir / "roughness.png"), metal = read_png(dir / "metallic.png"),
          ks = read_png(dir / "specular.png");
    BakeAgreement out;
    for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x) {
            Vec2 uv((x + 0.5) / resolution, 1.0 - (y + 0.5) / resolution);
            std::optional<Vec3> point;
            for (std::size_t f = 0; f < mesh.triangles.size() && !point; ++f) {
                const auto& t = mesh.corner_uvs[f];
                Eigen::Matrix2d m;
                m.col(0) = t[1] - t[0];
                m.col(1) = t[2] - t[0];
                if (std::abs(m.determinant()) < 1e-14) continue;
                Vec2 b = m.inverse() * (uv - t[0]);
                if (b.x() < -1e-9 || b.y() < -1e-9 || b.x() + b.y() > 1 + 1e-9) continue;
                const auto& tri = mesh.triangles[f];
                point = (1 - b.x() - b.y()) * mesh.positions[tri[0]] + b.x() * mesh.positions[tri[1]] +
                        b.y() * mesh.positions[tri[2]];
            }
            if (!point) continue;
            ++out.texels;
            auto s = field.eval_material(to_unit_cube(*point));
            for (int c = 0; c < 3; ++c) {
                out.kd = std::max(out.kd, std::abs(kd.at(x, y, c) - linear_to_srgb(s.albedo[c])));
                out.specular = std::max(out.specular, std::abs(ks.at(x, y, c) - s.specular[c]));
                double formula = s.metallic * s.albedo[c] + (1 - s.metallic) * 0.04;
                out.specular_formula = std::max(out.specular_formula, std::abs(ks.at(x, y, c) - formula));
            }
            out.roughness = std::max(out.roughness, std::abs(rough.at(x, y, 0) - s.roughness));
            out.metallic = std::max(out.metallic, std::abs(metal.at(x, y, 0) - s.metallic));
        }
    return out;
}

}  // namespace dsdtex::testing

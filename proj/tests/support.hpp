#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include <vector>

#include "dsdtex/autodiff.hpp"
#include "dsdtex/geometry.hpp"
#include "dsdtex/random.hpp"

namespace dsdtex::testing {

// Unit UV sphere with a seam, per-corner UVs and a face center on the +z side.
inline Mesh uv_sphere(int stacks = 16, int slices = 32) {
    Mesh m;
    for (int i = 0; i <= stacks; ++i) {
        double v = static_cast<double>(i) / stacks;
        double polar = v * std::numbers::pi;
        for (int j = 0; j <= slices; ++j) {
            double u = static_cast<double>(j) / slices;
            double az = u * 2.0 * std::numbers::pi;
            m.positions.emplace_back(std::sin(polar) * std::sin(az), std::cos(polar), std::sin(polar) * std::cos(az));
        }
    }
    auto id = [slices](int i, int j) { return static_cast<std::uint32_t>(i * (slices + 1) + j); };
    auto uv = [stacks, slices](int i, int j) {
        return Vec2(static_cast<double>(j) / slices, 1.0 - static_cast<double>(i) / stacks);
    };
    for (int i = 0; i < stacks; ++i)
        for (int j = 0; j < slices; ++j) {
            m.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            m.corner_uvs.push_back({uv(i, j), uv(i + 1, j), uv(i + 1, j + 1)});
            m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
            m.corner_uvs.push_back({uv(i, j), uv(i + 1, j + 1), uv(i, j + 1)});
        }
    m.face_center = Vec3(0.0, 0.5, std::sqrt(0.75));
    return finalize_mesh(std::move(m));
}

inline void write_obj(const std::filesystem::path& path, const Mesh& mesh, bool with_uvs = true) {
    std::ofstream os(path);
    os.precision(17);
    for (const auto& p : mesh.positions) os << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    if (with_uvs && mesh.has_uvs())
        for (const auto& tri : mesh.corner_uvs)
            for (const auto& t : tri) os << "vt " << t.x() << ' ' << t.y() << '\n';
    for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
        os << 'f';
        for (int k = 0; k < 3; ++k) {
            os << ' ' << mesh.triangles[f][k] + 1;
            if (with_uvs && mesh.has_uvs()) os << '/' << f * 3 + k + 1;
        }
        os << '\n';
    }
    if (mesh.face_center) {
        std::ofstream face(path.string() + ".face");
        face.precision(17);
        face << mesh.face_center->x() << ' ' << mesh.face_center->y() << ' ' << mesh.face_center->z() << '\n';
    }
}

// Hand-rolled generators for property tests.
struct Gen {
    Rng rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}
    double real(double lo = -1.0, double hi = 1.0) { return uniform(rng, lo, hi); }
    int integer(int lo, int hi) { return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1)); }
    std::vector<double> normals(std::size_t n) {
        std::vector<double> v(n);
        fill_standard_normal(rng, v);
        return v;
    }
    ad::Tensor tensor(ad::Shape shape, double lo = -1.0, double hi = 1.0) {
        ad::Tensor t = ad::Tensor::zeros(std::move(shape));
        for (auto& v : t.data) v = real(lo, hi);
        return t;
    }
    Vec3 vec3(double lo = -1.0, double hi = 1.0) { return Vec3(real(lo, hi), real(lo, hi), real(lo, hi)); }
};

// Random scene of up to `max_triangles` triangles in the unit ball, camera at radius 3.
struct RandomScene {
    Mesh mesh;
    Camera camera;
};

inline RandomScene random_scene(Gen& gen, int max_triangles = 20, int size = 32) {
    RandomScene s;
    const int n = gen.integer(1, max_triangles);
    for (int t = 0; t < n; ++t) {
        Vec3 c = gen.vec3(-0.6, 0.6);
        for (int k = 0; k < 3; ++k) s.mesh.positions.push_back(c + gen.vec3(-0.5, 0.5));
        auto b = static_cast<std::uint32_t>(3 * t);
        s.mesh.triangles.push_back({b, b + 1, b + 2});
    }
    MeshOptions opts;
    opts.normalize = false;
    s.mesh = finalize_mesh(std::move(s.mesh), opts);
    s.camera.radius = 3.0;
    s.camera.elevation = gen.real(-1.0, 1.0);
    s.camera.azimuth = gen.real(-3.1, 3.1);
    s.camera.width = s.camera.height = size;
    return s;
}

// Nearest triangle hit by the ray through the center of pixel (x, y), or -1.
// Built from the camera basis directly rather than the projection matrices.
inline std::int32_t ray_cast(const Mesh& mesh, const Camera& cam, int x, int y) {
    Vec3 eye = cam.position();
    Vec3 f = (cam.look_at - eye).normalized();
    Vec3 r = f.cross(Vec3::UnitY()).normalized();
    Vec3 u = r.cross(f);
    double th = std::tan(cam.fov_y / 2.0);
    double aspect = static_cast<double>(cam.width) / cam.height;
    double sx = (2.0 * (x + 0.5) / cam.width - 1.0) * th * aspect;
    double sy = (1.0 - 2.0 * (y + 0.5) / cam.height) * th;
    Vec3 dir = f + sx * r + sy * u;  // axial component 1, so t is the axial depth
    std::int32_t best = -1;
    double best_t = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        const Vec3& a = mesh.positions[mesh.triangles[i][0]];
        Vec3 e1 = mesh.positions[mesh.triangles[i][1]] - a;
        Vec3 e2 = mesh.positions[mesh.triangles[i][2]] - a;
        Vec3 p = dir.cross(e2);
        double det = e1.dot(p);
        if (std::abs(det) < 1e-15) continue;
        Vec3 s = eye - a;
        double bu = s.dot(p) / det;
        Vec3 q = s.cross(e1);
        double bv = dir.dot(q) / det;
        double t = e2.dot(q) / det;
        if (bu < 0.0 || bv < 0.0 || bu + bv > 1.0 || t < kNearPlane) continue;
        if (t < best_t) {
            best_t = t;
            best = static_cast<std::int32_t>(i);
        }
    }
    return best;
}

struct OracleAgreement {
    std::size_t off_edge = 0;
    std::size_t off_edge_match = 0;
    std::size_t total = 0;
    std::size_t total_match = 0;
};

// A pixel is off-edge when the oracle reports the same id on its whole 3x3 neighbourhood.
inline OracleAgreement compare_with_ray_cast(const Mesh& mesh, const Camera& cam, const std::vector<std::int32_t>& ids) {
    const int W = cam.width, H = cam.height;
    std::vector<std::int32_t> ref(static_cast<std::size_t>(W) * H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) ref[static_cast<std::size_t>(y) * W + x] = ray_cast(mesh, cam, x, y);
    OracleAgreement out;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            auto i = static_cast<std::size_t>(y) * W + x;
            bool match = ids[i] == ref[i];
            ++out.total;
            out.total_match += match;
            bool edge = false;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int xx = x + dx, yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= W || yy >= H) continue;
                    if (ref[static_cast<std::size_t>(yy) * W + xx] != ref[i]) edge = true;
                }
            if (!edge) {
                ++out.off_edge;
                out.off_edge_match += match;
            }
        }
    return out;
}

// One-sample Kolmogorov-Smirnov statistic against U[lo, hi].
inline double ks_uniform(std::vector<double> samples, double lo, double hi) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double f = (samples[i] - lo) / (hi - lo);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

// Asymptotic critical value at significance 0.01.
inline double ks_critical_001(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("dsdtex_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace dsdtex::testing

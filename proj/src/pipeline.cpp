#include "dsdtex/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numbers>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "dsdtex/image_io.hpp"
#include "dsdtex/rasterizer.hpp"

namespace dsdtex {

EnvironmentLight constant_environment(const ShadingConfig& shading, double radiance) {
    return prefilter(CubeMap::constant(shading.face_size, Vec3::Constant(radiance)), shading);
}

Scene build_scene(const RunConfig& config) {
    Scene scene;
    scene.mesh = load_mesh(config.mesh);
    scene.environment = config.environment.empty() ? constant_environment(config.shading)
                                                   : prefilter(load_cube_map(config.environment), config.shading);
    scene.background = Vec3(config.background[0], config.background[1], config.background[2]);
    return scene;
}

LocalBackend make_analytic_backend(const AnalyticConfig& a, const GuidanceConfig& guidance, int resolution) {
    NoiseSchedule schedule(guidance.schedule);
    std::vector<GaussianComponent> target{{1.0, solid_image(resolution, resolution, a.target), a.target_variance}};
    std::vector<GaussianComponent> uncond{
        {1.0, solid_image(resolution, resolution, a.unconditional), a.unconditional_variance}};
    LocalBackend backend(AnalyticDenoiser(std::move(schedule), std::move(uncond)));
    backend.denoiser().bind(backend.embed_text(guidance.prompt), target);
    backend.denoiser().bind(backend.embed_text(std::string(kFacePrefix) + guidance.prompt), std::move(target));
    if (a.negative) {
        backend.denoiser().bind(backend.embed_text(guidance.negative_prompt()),
                                {{1.0, solid_image(resolution, resolution, *a.negative), a.negative_variance}});
    }
    return backend;
}

std::unique_ptr<GuidanceBackend> make_backend(const RunConfig& config) {
    if (config.backend == BackendKind::Remote)
        return std::make_unique<RemoteBackend>(config.remote, NoiseSchedule(config.guidance.schedule));
    return std::make_unique<LocalBackend>(make_analytic_backend(config.analytic, config.guidance, config.train.resolution));
}

BakedTextures bake_textures(const MaterialField& field, const Mesh& mesh, int resolution) {
    if (!mesh.has_uvs()) throw MeshError("mesh has no texture coordinates; use the per-vertex fallback");
    if (resolution < 1) throw std::invalid_argument("bake resolution must be >= 1");
    const auto R = static_cast<std::size_t>(resolution);
    std::vector<Vec3> points(R * R, Vec3::Zero());
    BakedTextures out;
    out.resolution = resolution;
    out.covered.assign(R * R, 0);

    for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
        const auto& tri = mesh.triangles[f];
        const auto& uv = mesh.corner_uvs[f];
        // Texel space: x = u * R, y = (1 - v) * R.
        std::array<Vec2, 3> q;
        for (int k = 0; k < 3; ++k) q[k] = Vec2(uv[k].x() * resolution, (1.0 - uv[k].y()) * resolution);
        double area = (q[1] - q[0]).x() * (q[2] - q[0]).y() - (q[1] - q[0]).y() * (q[2] - q[0]).x();
        if (std::abs(area) < 1e-14) continue;
        int x0 = std::max(0, static_cast<int>(std::floor(std::min({q[0].x(), q[1].x(), q[2].x()}))));
        int x1 = std::min(resolution - 1, static_cast<int>(std::ceil(std::max({q[0].x(), q[1].x(), q[2].x()}))));
        int y0 = std::max(0, static_cast<int>(std::floor(std::min({q[0].y(), q[1].y(), q[2].y()}))));
        int y1 = std::min(resolution - 1, static_cast<int>(std::ceil(std::max({q[0].y(), q[1].y(), q[2].y()}))));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                std::size_t idx = static_cast<std::size_t>(y) * R + static_cast<std::size_t>(x);
                if (out.covered[idx]) continue;
                Vec2 p(x + 0.5, y + 0.5);
                auto edge = [](const Vec2& a, const Vec2& b, const Vec2& c) {
                    return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
                };
                double b0 = edge(q[1], q[2], p) / area;
                double b1 = edge(q[2], q[0], p) / area;
                double b2 = edge(q[0], q[1], p) / area;
                constexpr double tol = -1e-9;
                if (b0 < tol || b1 < tol || b2 < tol) continue;
                points[idx] = b0 * mesh.positions[tri[0]] + b1 * mesh.positions[tri[1]] + b2 * mesh.positions[tri[2]];
                out.covered[idx] = 1;
            }
    }

    std::vector<Vec3> query;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < R * R; ++i)
        if (out.covered[i]) {
            query.push_back(to_unit_cube(points[i]));
            where.push_back(i);
        }
    out.texels.assign(R * R, MaterialSample{});
    if (query.empty()) {
        spdlog::warn("UV chart covers no texel centers; filling with the field at the mesh center");
        out.texels.assign(R * R, field.eval_material(to_unit_cube(Vec3::Zero())));
        return out;
    }
    auto samples = field.evaluate(query);
    for (std::size_t k = 0; k < where.size(); ++k) out.texels[where[k]] = samples[k];

    // Breadth-first fill of uncovered texels from their nearest covered neighbour.
    std::vector<std::uint8_t> filled = out.covered;
    std::deque<std::size_t> queue(where.begin(), where.end());
    while (!queue.empty()) {
        auto i = queue.front();
        queue.pop_front();
        auto x = i % R, y = i / R;
        std::size_t nbr[4];
        int cnt = 0;
        if (x > 0) nbr[cnt++] = i - 1;
        if (x + 1 < R) nbr[cnt++] = i + 1;
        if (y > 0) nbr[cnt++] = i - R;
        if (y + 1 < R) nbr[cnt++] = i + R;
        for (int k = 0; k < cnt; ++k)
            if (!filled[nbr[k]]) {
                filled[nbr[k]] = 1;
                out.texels[nbr[k]] = out.texels[i];
                queue.push_back(nbr[k]);
            }
    }
    return out;
}

std::vector<std::filesystem::path> write_textures(const std::filesystem::path& dir, const BakedTextures& t) {
    const int R = t.resolution;
    Image kd(R, R, 3), rough(R, R, 1), metal(R, R, 1), ks(R, R, 3);
    for (std::size_t i = 0; i < t.texels.size(); ++i) {
        const auto& s = t.texels[i];
        for (int c = 0; c < 3; ++c) {
            kd.data[i * 3 + c] = s.albedo[c];
            ks.data[i * 3 + c] = s.specular[c];
        }
        rough.data[i] = s.roughness;
        metal.data[i] = s.metallic;
    }
    std::vector<std::filesystem::path> paths{dir / "kd.png", dir / "roughness.png", dir / "metallic.png",
                                             dir / "specular.png"};
    write_png(paths[0], kd, true);
    write_png(paths[1], rough, false);
    write_png(paths[2], metal, false);
    write_png(paths[3], ks, false);
    return paths;
}

std::filesystem::path write_vertex_materials(const std::filesystem::path& path, const MaterialField& field,
                                             const Mesh& mesh) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::vector<Vec3> query;
    for (const auto& p : mesh.positions) query.push_back(to_unit_cube(p));
    auto samples = field.evaluate(query);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.precision(9);
    os << "x,y,z,kd_r,kd_g,kd_b,roughness,metallic,ks_r,ks_g,ks_b\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& p = mesh.positions[i];
        const auto& s = samples[i];
        os << p.x() << ',' << p.y() << ',' << p.z() << ',' << s.albedo.x() << ',' << s.albedo.y() << ',' << s.albedo.z()
           << ',' << s.roughness << ',' << s.metallic << ',' << s.specular.x() << ',' << s.specular.y() << ','
           << s.specular.z() << '\n';
    }
    return path;
}

Camera turntable_camera(const TurntableOptions& o, int index) {
    Camera cam;
    cam.radius = o.radius;
    cam.elevation = o.elevation;
    cam.azimuth = 2.0 * std::numbers::pi * index / o.poses;
    cam.fov_y = o.fov_y;
    cam.width = cam.height = o.resolution;
    return cam;
}

std::vector<std::filesystem::path> render_turntable(const MaterialField& field, const Scene& scene,
                                                    const TurntableOptions& options,
                                                    const std::filesystem::path& output_dir) {
    if (options.poses < 1) throw std::invalid_argument("turntable needs at least one pose");
    std::filesystem::create_directories(output_dir);
    std::vector<std::filesystem::path> paths(static_cast<std::size_t>(options.poses));
    for (int k = 0; k < options.poses; ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03d.png", k);
        paths[k] = output_dir / name;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (int k; (k = next.fetch_add(1)) < options.poses;) {
            try {
                write_shaded_png(paths[k], render_field(field, scene, turntable_camera(options, k)));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    unsigned n = std::max(1u, std::min(std::thread::hardware_concurrency(), static_cast<unsigned>(options.poses)));
    {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return paths;
}

std::uint64_t fnv1a64(std::span<const char> bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a64(bytes);
}

std::string checksum_hex(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace dsdtex

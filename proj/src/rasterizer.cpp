#include "dsdtex/rasterizer.hpp"

#include <algorithm>
#include <cmath>

namespace dsdtex {

std::size_t GBuffer::hit_count() const {
    return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](const auto& p) { return p.hit; }));
}

namespace {

struct ClipVertex {
    Vec4 clip;
    Vec3 bary;  // weights of the original triangle corners
};

// Sutherland-Hodgman against w >= near.
std::vector<ClipVertex> clip_near(const std::array<ClipVertex, 3>& tri) {
    std::vector<ClipVertex> out;
    out.reserve(4);
    for (int i = 0; i < 3; ++i) {
        const auto& a = tri[i];
        const auto& b = tri[(i + 1) % 3];
        double da = a.clip.w() - kNearPlane;
        double db = b.clip.w() - kNearPlane;
        if (da >= 0.0) out.push_back(a);
        if ((da >= 0.0) != (db >= 0.0)) {
            double s = da / (da - db);
            out.push_back({a.clip + s * (b.clip - a.clip), a.bary + s * (b.bary - a.bary)});
        }
    }
    return out;
}

}  // namespace

GBuffer rasterize(const Mesh& mesh, const Camera& camera) {
    auto mats = camera_matrices(camera);
    const int W = camera.width, H = camera.height;
    GBuffer gb;
    gb.width = W;
    gb.height = H;
    gb.pixels.assign(static_cast<std::size_t>(W) * H, GBufferPixel{});

    std::vector<Vec4> clip(mesh.positions.size());
    Mat4 vp = mats.projection * mats.view;
    for (std::size_t i = 0; i < mesh.positions.size(); ++i) clip[i] = vp * mesh.positions[i].homogeneous();

    for (std::size_t ti = 0; ti < mesh.triangles.size(); ++ti) {
        const auto& t = mesh.triangles[ti];
        std::array<ClipVertex, 3> tri{ClipVertex{clip[t[0]], Vec3::UnitX()}, ClipVertex{clip[t[1]], Vec3::UnitY()},
                                      ClipVertex{clip[t[2]], Vec3::UnitZ()}};
        if (tri[0].clip.w() < kNearPlane && tri[1].clip.w() < kNearPlane && tri[2].clip.w() < kNearPlane) continue;
        auto poly = (tri[0].clip.w() >= kNearPlane && tri[1].clip.w() >= kNearPlane && tri[2].clip.w() >= kNearPlane)
                        ? std::vector<ClipVertex>(tri.begin(), tri.end())
                        : clip_near(tri);
        if (poly.size() < 3) continue;

        // Screen-space positions and 1/w of the clipped polygon.
        std::vector<Vec2> scr(poly.size());
        std::vector<double> inv_w(poly.size());
        for (std::size_t k = 0; k < poly.size(); ++k) {
            inv_w[k] = 1.0 / poly[k].clip.w();
            scr[k] = Vec2((poly[k].clip.x() * inv_w[k] + 1.0) * 0.5 * W, (1.0 - poly[k].clip.y() * inv_w[k]) * 0.5 * H);
        }

        for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
            const std::array<std::size_t, 3> idx{0, k, k + 1};
            const Vec2 &p0 = scr[idx[0]], &p1 = scr[idx[1]], &p2 = scr[idx[2]];
            double area = (p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x();
            if (std::abs(area) < 1e-14) continue;

            double min_x = std::min({p0.x(), p1.x(), p2.x()}), max_x = std::max({p0.x(), p1.x(), p2.x()});
            double min_y = std::min({p0.y(), p1.y(), p2.y()}), max_y = std::max({p0.y(), p1.y(), p2.y()});
            int x0 = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
            int x1 = std::min(W - 1, static_cast<int>(std::ceil(max_x - 0.5)));
            int y0 = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
            int y1 = std::min(H - 1, static_cast<int>(std::ceil(max_y - 0.5)));

            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    Vec2 c(x + 0.5, y + 0.5);
                    auto edge = [&](const Vec2& a, const Vec2& b) {
                        return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
                    };
                    double l0 = edge(p1, p2) / area;
                    double l1 = edge(p2, p0) / area;
                    double l2 = edge(p0, p1) / area;
                    if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;

                    double q0 = l0 * inv_w[idx[0]], q1 = l1 * inv_w[idx[1]], q2 = l2 * inv_w[idx[2]];
                    double qsum = q0 + q1 + q2;
                    // clip.w equals view-space depth for this projection.
                    double depth = 1.0 / qsum;
                    if (!(depth > 0.0) || depth > kFarPlane) continue;

                    auto& px = gb.pixels[static_cast<std::size_t>(y) * W + x];
                    if (px.hit && depth >= px.depth) continue;

                    Vec3 bary = (q0 * poly[idx[0]].bary + q1 * poly[idx[1]].bary + q2 * poly[idx[2]].bary) / qsum;
                    bary = bary.cwiseMax(0.0);
                    bary /= bary.sum();

                    px.hit = true;
                    px.depth = depth;
                    px.triangle = static_cast<std::int32_t>(ti);
                    px.barycentric = bary;
                    px.position = bary[0] * mesh.positions[t[0]] + bary[1] * mesh.positions[t[1]] +
                                  bary[2] * mesh.positions[t[2]];
                    Vec3 n = bary[0] * mesh.normals[t[0]] + bary[1] * mesh.normals[t[1]] + bary[2] * mesh.normals[t[2]];
                    if (n.norm() < 1e-12) {
                        n = (mesh.positions[t[1]] - mesh.positions[t[0]]).cross(mesh.positions[t[2]] - mesh.positions[t[0]]);
                    }
                    px.normal = n.normalized();
                }
        }
    }
    return gb;
}

std::vector<double> depth_map(const GBuffer& gbuffer) {
    std::vector<double> out(gbuffer.pixels.size(), 0.0);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : gbuffer.pixels)
        if (p.hit) {
            lo = std::min(lo, p.depth);
            hi = std::max(hi, p.depth);
        }
    if (!(lo <= hi)) return out;
    const bool flat = hi - lo <= 1e-9 * hi;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& p = gbuffer.pixels[i];
        if (!p.hit) continue;
        out[i] = flat ? 1.0 : (hi - p.depth) / (hi - lo);
    }
    return out;
}

}  // namespace dsdtex

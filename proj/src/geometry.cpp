#include "dsdtex/geometry.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <spdlog/spdlog.h>

namespace dsdtex {

Vec3 Mesh::centroid() const {
    Vec3 acc = Vec3::Zero();
    double total = 0.0;
    for (const auto& t : triangles) {
        const Vec3 &a = positions[t[0]], &b = positions[t[1]], &c = positions[t[2]];
        double area = 0.5 * (b - a).cross(c - a).norm();
        acc += area * (a + b + c) / 3.0;
        total += area;
    }
    return total > 0.0 ? Vec3(acc / total) : Vec3::Zero();
}

Mesh finalize_mesh(Mesh mesh, const MeshOptions& options) {
    if (mesh.positions.empty() || mesh.triangles.empty()) throw MeshError("mesh is empty");
    if (!mesh.corner_uvs.empty() && mesh.corner_uvs.size() != mesh.triangles.size())
        throw MeshError("corner UV count does not match triangle count");
    bool had_normals = mesh.normals.size() == mesh.positions.size();
    if (!mesh.normals.empty() && !had_normals) throw MeshError("normal count does not match vertex count");

    const auto vertex_count = mesh.positions.size();
    std::vector<Triangle> kept;
    std::vector<std::array<Vec2, 3>> kept_uvs;
    kept.reserve(mesh.triangles.size());
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        const auto& t = mesh.triangles[i];
        for (auto v : t)
            if (v >= vertex_count)
                throw MeshError("triangle " + std::to_string(i) + " references vertex " + std::to_string(v) +
                                " of " + std::to_string(vertex_count));
        const Vec3 &a = mesh.positions[t[0]], &b = mesh.positions[t[1]], &c = mesh.positions[t[2]];
        if (0.5 * (b - a).cross(c - a).norm() <= options.degenerate_area) {
            ++dropped;
            continue;
        }
        kept.push_back(t);
        if (mesh.has_uvs()) kept_uvs.push_back(mesh.corner_uvs[i]);
    }
    if (dropped) spdlog::warn("dropped {} zero-area triangle(s)", dropped);
    if (kept.empty()) throw MeshError("mesh has no non-degenerate triangles");
    mesh.triangles = std::move(kept);
    mesh.corner_uvs = std::move(kept_uvs);

    std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_use;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            auto a = t[e], b = t[(e + 1) % 3];
            ++edge_use[{std::min(a, b), std::max(a, b)}];
        }
    mesh.non_manifold_edges = 0;
    for (const auto& [edge, count] : edge_use)
        if (count > 2) ++mesh.non_manifold_edges;
    if (mesh.non_manifold_edges)
        spdlog::warn("mesh has {} non-manifold edge(s); continuing", mesh.non_manifold_edges);

    if (!had_normals) {
        mesh.normals.assign(vertex_count, Vec3::Zero());
        // Unnormalized cross product weights each face by twice its area.
        for (const auto& t : mesh.triangles) {
            Vec3 n = (mesh.positions[t[1]] - mesh.positions[t[0]]).cross(mesh.positions[t[2]] - mesh.positions[t[0]]);
            for (auto v : t) mesh.normals[v] += n;
        }
    }
    for (auto& n : mesh.normals) {
        double len = n.norm();
        n = len > 0.0 ? Vec3(n / len) : Vec3(0.0, 0.0, 1.0);
    }

    if (options.normalize) {
        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 hi = -lo;
        for (const auto& t : mesh.triangles)
            for (auto v : t) {
                lo = lo.cwiseMin(mesh.positions[v]);
                hi = hi.cwiseMax(mesh.positions[v]);
            }
        Vec3 center = 0.5 * (lo + hi);
        double extent = 0.0;
        for (const auto& t : mesh.triangles)
            for (auto v : t) extent = std::max(extent, (mesh.positions[v] - center).norm());
        double scale = extent > 0.0 ? 1.0 / extent : 1.0;
        for (auto& p : mesh.positions) p = (p - center) * scale;
        if (mesh.face_center) mesh.face_center = (*mesh.face_center - center) * scale;
        mesh.normalize_center = center;
        mesh.normalize_scale = scale;
    }
    return mesh;
}

namespace {

// Resolves a 1-based (or negative, relative) OBJ index.
std::uint32_t resolve_index(long idx, std::size_t count, std::size_t line) {
    long resolved = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
    if (idx == 0 || resolved < 0 || static_cast<std::size_t>(resolved) >= count)
        throw MeshError("OBJ line " + std::to_string(line) + ": index " + std::to_string(idx) + " out of range");
    return static_cast<std::uint32_t>(resolved);
}

struct Corner {
    std::uint32_t v;
    std::optional<std::uint32_t> vt;
    std::optional<std::uint32_t> vn;
};

Mesh parse_obj_raw(std::istream& in) {
    Mesh mesh;
    std::vector<Vec2> uvs;
    std::vector<Vec3> file_normals;
    std::vector<Vec3> normal_acc;
    bool all_corners_have_uv = true;
    bool all_corners_have_normal = true;
    std::vector<std::array<std::optional<std::uint32_t>, 3>> tri_uv_idx;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z())) throw MeshError("OBJ line " + std::to_string(line_no) + ": bad vertex");
            mesh.positions.push_back(p);
        } else if (tag == "vt") {
            Vec2 uv;
            if (!(ls >> uv.x() >> uv.y())) throw MeshError("OBJ line " + std::to_string(line_no) + ": bad texcoord");
            uvs.push_back(uv);
        } else if (tag == "vn") {
            Vec3 n;
            if (!(ls >> n.x() >> n.y() >> n.z())) throw MeshError("OBJ line " + std::to_string(line_no) + ": bad normal");
            file_normals.push_back(n);
        } else if (tag == "f") {
            std::vector<Corner> corners;
            std::string tok;
            while (ls >> tok) {
                Corner c{};
                std::array<std::string, 3> parts;
                std::size_t part = 0;
                for (char ch : tok) {
                    if (ch == '/') {
                        if (++part > 2) throw MeshError("OBJ line " + std::to_string(line_no) + ": bad face corner");
                    } else {
                        parts[part] += ch;
                    }
                }
                try {
                    c.v = resolve_index(std::stol(parts[0]), mesh.positions.size(), line_no);
                    if (!parts[1].empty()) c.vt = resolve_index(std::stol(parts[1]), uvs.size(), line_no);
                    if (!parts[2].empty()) c.vn = resolve_index(std::stol(parts[2]), file_normals.size(), line_no);
                } catch (const std::logic_error&) {
                    throw MeshError("OBJ line " + std::to_string(line_no) + ": bad face corner '" + tok + "'");
                }
                corners.push_back(c);
            }
            if (corners.size() < 3) throw MeshError("OBJ line " + std::to_string(line_no) + ": face with < 3 corners");
            for (std::size_t k = 1; k + 1 < corners.size(); ++k) {
                std::array<Corner, 3> tri{corners[0], corners[k], corners[k + 1]};
                mesh.triangles.push_back({tri[0].v, tri[1].v, tri[2].v});
                std::array<std::optional<std::uint32_t>, 3> uv_idx;
                for (int j = 0; j < 3; ++j) {
                    uv_idx[j] = tri[j].vt;
                    all_corners_have_uv &= tri[j].vt.has_value();
                    all_corners_have_normal &= tri[j].vn.has_value();
                    if (tri[j].vn) {
                        if (normal_acc.size() < mesh.positions.size()) normal_acc.resize(mesh.positions.size(), Vec3::Zero());
                        normal_acc[tri[j].v] += file_normals[*tri[j].vn];
                    }
                }
                tri_uv_idx.push_back(uv_idx);
            }
        }
    }

    if (!mesh.triangles.empty() && all_corners_have_uv) {
        mesh.corner_uvs.reserve(tri_uv_idx.size());
        for (const auto& t : tri_uv_idx) mesh.corner_uvs.push_back({uvs[*t[0]], uvs[*t[1]], uvs[*t[2]]});
    }
    if (!mesh.triangles.empty() && all_corners_have_normal) {
        normal_acc.resize(mesh.positions.size(), Vec3::Zero());
        mesh.normals = std::move(normal_acc);
    }
    return mesh;
}

}  // namespace

Mesh parse_obj(std::istream& in, const MeshOptions& options) { return finalize_mesh(parse_obj_raw(in), options); }

Mesh load_mesh(const std::filesystem::path& path, const MeshOptions& options) {
    std::ifstream in(path);
    if (!in) throw MeshError("cannot read mesh file " + path.string());

    std::optional<Vec3> face_center;
    auto sidecar = path;
    sidecar += ".face";
    if (std::ifstream fc(sidecar); fc) {
        Vec3 c;
        if (!(fc >> c.x() >> c.y() >> c.z())) throw MeshError("malformed face sidecar " + sidecar.string());
        face_center = c;
    }

    // The face center is attached before finalizing so it shares the normalization transform.
    Mesh mesh = parse_obj_raw(in);
    mesh.face_center = face_center;
    return finalize_mesh(std::move(mesh), options);
}

Vec3 Camera::position() const {
    double ce = std::cos(elevation);
    return look_at + radius * Vec3(ce * std::sin(azimuth), std::sin(elevation), ce * std::cos(azimuth));
}

void Camera::validate() const {
    if (!(radius > 0.0)) throw std::invalid_argument("camera radius must be positive");
    if (width < 8 || height < 8) throw std::invalid_argument("camera resolution must be at least 8x8");
    if (!(fov_y > 0.0 && fov_y < std::numbers::pi)) throw std::invalid_argument("camera fov_y out of range");
    if (std::abs(std::cos(elevation)) < 1e-9) throw std::invalid_argument("camera elevation at a pole");
}

CameraMatrices camera_matrices(const Camera& camera) {
    camera.validate();
    Vec3 eye = camera.position();
    Vec3 forward = (camera.look_at - eye).normalized();
    Vec3 right = forward.cross(Vec3::UnitY()).normalized();
    Vec3 up = right.cross(forward);

    Mat4 view = Mat4::Identity();
    view.block<1, 3>(0, 0) = right.transpose();
    view.block<1, 3>(1, 0) = up.transpose();
    view.block<1, 3>(2, 0) = -forward.transpose();
    view(0, 3) = -right.dot(eye);
    view(1, 3) = -up.dot(eye);
    view(2, 3) = forward.dot(eye);

    double aspect = static_cast<double>(camera.width) / camera.height;
    double f = 1.0 / std::tan(camera.fov_y / 2.0);
    Mat4 proj = Mat4::Zero();
    proj(0, 0) = f / aspect;
    proj(1, 1) = f;
    proj(2, 2) = (kFarPlane + kNearPlane) / (kNearPlane - kFarPlane);
    proj(2, 3) = 2.0 * kFarPlane * kNearPlane / (kNearPlane - kFarPlane);
    proj(3, 2) = -1.0;
    return {view, proj};
}

Projection project(const Camera& camera, const Vec3& point) {
    auto m = camera_matrices(camera);
    Vec4 view_p = m.view * point.homogeneous();
    Vec4 clip = m.projection * view_p;
    Projection out;
    out.depth = -view_p.z();
    if (!(clip.w() > kNearPlane)) return out;
    double nx = clip.x() / clip.w(), ny = clip.y() / clip.w();
    out.pixel = Vec2((nx + 1.0) * 0.5 * camera.width, (1.0 - ny) * 0.5 * camera.height);
    out.visible = std::abs(nx) <= 1.0 && std::abs(ny) <= 1.0 && out.depth <= kFarPlane;
    return out;
}

namespace {

double sample_interval(Rng& rng, const Interval& iv, const char* what) {
    if (!iv.valid()) throw std::invalid_argument(std::string("camera ") + what + " interval is inverted");
    return iv.lo == iv.hi ? iv.lo : uniform(rng, iv.lo, iv.hi);
}

}  // namespace

Camera sample_body_camera(Rng& rng, const BodyCameraConfig& config, const Vec3& look_at) {
    Camera cam;
    cam.radius = config.radius;
    cam.elevation = sample_interval(rng, config.elevation, "elevation");
    cam.azimuth = sample_interval(rng, config.azimuth, "azimuth");
    cam.look_at = look_at;
    cam.fov_y = config.fov_y;
    cam.width = config.width;
    cam.height = config.height;
    return cam;
}

Camera sample_face_camera(Rng& rng, const std::optional<Vec3>& face_center, const FaceCameraConfig& config) {
    if (!face_center)
        throw std::invalid_argument("face camera requires a face center: add a '<mesh>.face' sidecar");
    Camera cam;
    cam.radius = config.radius;
    cam.elevation = sample_interval(rng, config.elevation, "elevation");
    cam.azimuth = sample_interval(rng, config.azimuth, "azimuth");
    cam.look_at = *face_center;
    cam.fov_y = config.fov_y;
    cam.width = config.width;
    cam.height = config.height;
    return cam;
}

}  // namespace dsdtex

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "dsdtex/random.hpp"

namespace dsdtex {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

class MeshError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Triangle = std::array<std::uint32_t, 3>;

struct Mesh {
    std::vector<Vec3> positions;
    std::vector<Triangle> triangles;
    // Unit length, one per position.
    std::vector<Vec3> normals;
    // Either empty or one UV triple per triangle.
    std::vector<std::array<Vec2, 3>> corner_uvs;
    // Face region center in the same (normalized) frame as positions.
    std::optional<Vec3> face_center;

    // Maps original file coordinates into the normalized frame: p' = (p - center) * scale.
    Vec3 normalize_center = Vec3::Zero();
    double normalize_scale = 1.0;
    // Edges shared by more than two triangles, counted at load.
    std::size_t non_manifold_edges = 0;

    bool has_uvs() const { return !corner_uvs.empty(); }
    // Area-weighted surface centroid.
    Vec3 centroid() const;
    Vec3 to_normalized(const Vec3& original) const { return (original - normalize_center) * normalize_scale; }
};

struct MeshOptions {
    // Uniform scale + translation so every vertex lies in the unit ball at the origin.
    bool normalize = true;
    double degenerate_area = 1e-12;
};

// Validates indices, drops zero-area triangles, fills area-weighted normals when
// `mesh.normals` is empty, and optionally normalizes. Throws MeshError.
Mesh finalize_mesh(Mesh mesh, const MeshOptions& options = {});

// Triangulated Wavefront OBJ (v, vt, vn, f; polygons are fan-split).
Mesh parse_obj(std::istream& in, const MeshOptions& options = {});
// Reads an OBJ and, when present, the sidecar `<path>.face` holding "x y z" of the
// face center in file coordinates.
Mesh load_mesh(const std::filesystem::path& path, const MeshOptions& options = {});

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool valid() const { return lo <= hi; }
    bool contains(double v) const { return v >= lo && v <= hi; }
    bool operator==(const Interval&) const = default;
};

struct Camera {
    double radius = 3.0;
    // Elevation above the horizontal (xz) plane.
    double elevation = 0.0;
    // Azimuth around +y; zero faces the +z side of the subject.
    double azimuth = 0.0;
    Vec3 look_at = Vec3::Zero();
    double fov_y = std::numbers::pi / 4.0;
    int width = 64;
    int height = 64;

    Vec3 position() const;
    void validate() const;
};

struct CameraMatrices {
    Mat4 view;
    Mat4 projection;
};

inline constexpr double kNearPlane = 0.01;
inline constexpr double kFarPlane = 100.0;

CameraMatrices camera_matrices(const Camera& camera);

struct Projection {
    // Continuous pixel coordinates; pixel (i, j) spans [i, i+1) x [j, j+1), row 0 at top.
    Vec2 pixel = Vec2::Zero();
    // Distance along the optical axis.
    double depth = 0.0;
    bool visible = false;
};

Projection project(const Camera& camera, const Vec3& point);

struct BodyCameraConfig {
    double radius = 3.0;
    Interval elevation{-std::numbers::pi / 18.0, std::numbers::pi / 4.0};
    Interval azimuth{std::numbers::pi / 7.0, std::numbers::pi / 4.0};
    double fov_y = std::numbers::pi / 4.0;
    int width = 64;
    int height = 64;

    bool operator==(const BodyCameraConfig&) const = default;
};

struct FaceCameraConfig {
    double radius = 0.8;
    Interval elevation{-std::numbers::pi / 4.0, std::numbers::pi / 4.0};
    Interval azimuth{7.0 * std::numbers::pi / 18.0, 5.0 * std::numbers::pi / 9.0};
    double fov_y = std::numbers::pi / 4.0;
    int width = 64;
    int height = 64;

    bool operator==(const FaceCameraConfig&) const = default;
};

Camera sample_body_camera(Rng& rng, const BodyCameraConfig& config, const Vec3& look_at);
// Throws std::invalid_argument when no face center is known.
Camera sample_face_camera(Rng& rng, const std::optional<Vec3>& face_center, const FaceCameraConfig& config);

}  // namespace dsdtex

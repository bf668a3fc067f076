#include <doctest.h>

#include <sstream>

#include "dsdtex/geometry.hpp"
#include "support.hpp"

using namespace dsdtex;
using namespace dsdtex::testing;

namespace {

const char* kCube = R"(v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
)";

}  // namespace

TEST_CASE("obj cube topology") {
    std::istringstream in(kCube);
    Mesh m = parse_obj(in);
    CHECK(m.positions.size() == 8);
    CHECK(m.triangles.size() == 12);
    CHECK(m.normals.size() == 8);
    CHECK_FALSE(m.has_uvs());
    for (const auto& p : m.positions) CHECK(p.norm() <= 1.0 + 1e-12);
    double far = 0.0;
    for (const auto& p : m.positions) far = std::max(far, p.norm());
    CHECK(far == doctest::Approx(1.0));
}

TEST_CASE("zero-area triangles are dropped") {
    std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n");
    Mesh m = parse_obj(in);
    CHECK(m.triangles.size() == 1);
}

TEST_CASE("planar quad normals") {
    std::istringstream in("v -1 -1 0\nv 1 -1 0\nv 1 1 0\nv -1 1 0\nf 1 2 3 4\n");
    Mesh m = parse_obj(in);
    CHECK(m.triangles.size() == 2);
    for (const auto& n : m.normals) CHECK((n - Vec3(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("obj errors") {
    std::istringstream bad_index("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
    CHECK_THROWS_AS(parse_obj(bad_index), MeshError);
    std::istringstream empty("# nothing\n");
    CHECK_THROWS_AS(parse_obj(empty), MeshError);
    CHECK_THROWS_AS(load_mesh("/nonexistent/mesh.obj"), MeshError);
}

TEST_CASE("face sidecar is mapped into the normalized frame") {
    auto dir = scratch_dir("geometry_sidecar");
    {
        std::ofstream os(dir / "tri.obj");
        os << "v 0 0 0\nv 4 0 0\nv 0 4 0\nf 1 2 3\n";
        std::ofstream face(dir / "tri.obj.face");
        face << "2 2 0\n";
    }
    Mesh m = load_mesh(dir / "tri.obj");
    REQUIRE(m.face_center);
    CHECK((*m.face_center - m.to_normalized(Vec3(2, 2, 0))).norm() < 1e-12);
}

TEST_CASE("body camera samples stay in range") {
    BodyCameraConfig cfg;
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
        Camera c = sample_body_camera(rng, cfg, Vec3::Zero());
        CHECK(cfg.elevation.contains(c.elevation));
        CHECK(cfg.azimuth.contains(c.azimuth));
        CHECK(c.radius == 3.0);
        CHECK(c.position().norm() == doctest::Approx(3.0).epsilon(1e-12));
    }
}

TEST_CASE("camera sampling is deterministic and supports collapsed intervals") {
    BodyCameraConfig cfg;
    Rng a(42), b(42);
    Camera ca = sample_body_camera(a, cfg, Vec3::Zero());
    Camera cb = sample_body_camera(b, cfg, Vec3::Zero());
    CHECK(ca.elevation == cb.elevation);
    CHECK(ca.azimuth == cb.azimuth);

    cfg.elevation = {0.0, 0.0};
    for (int i = 0; i < 100; ++i) CHECK(sample_body_camera(a, cfg, Vec3::Zero()).elevation == 0.0);

    cfg.elevation = {1.0, 0.0};
    CHECK_THROWS_AS(sample_body_camera(a, cfg, Vec3::Zero()), std::invalid_argument);
}

TEST_CASE("face camera samples") {
    FaceCameraConfig cfg;
    Rng rng(5);
    Vec3 center(0.1, 0.6, 0.2);
    std::vector<double> el, az;
    for (int i = 0; i < 10000; ++i) {
        Camera c = sample_face_camera(rng, center, cfg);
        CHECK(c.look_at == center);
        CHECK(c.radius == 0.8);
        el.push_back(c.elevation);
        az.push_back(c.azimuth);
    }
    CHECK(*std::min_element(el.begin(), el.end()) > cfg.elevation.lo);
    CHECK(*std::max_element(el.begin(), el.end()) < cfg.elevation.hi);
    CHECK(*std::min_element(az.begin(), az.end()) > cfg.azimuth.lo);
    CHECK(*std::max_element(az.begin(), az.end()) < cfg.azimuth.hi);
    CHECK(ks_uniform(el, cfg.elevation.lo, cfg.elevation.hi) < ks_critical_001(el.size()));
    CHECK(ks_uniform(az, cfg.azimuth.lo, cfg.azimuth.hi) < ks_critical_001(az.size()));
    CHECK_THROWS_AS(sample_face_camera(rng, std::nullopt, cfg), std::invalid_argument);
}

TEST_CASE("projection") {
    Camera cam;
    cam.radius = 3.0;
    cam.width = 64;
    cam.height = 48;
    Projection origin = project(cam, Vec3::Zero());
    CHECK(origin.visible);
    CHECK(origin.pixel.x() == doctest::Approx(32.0));
    CHECK(origin.pixel.y() == doctest::Approx(24.0));
    CHECK(origin.depth == doctest::Approx(3.0));
    CHECK_FALSE(project(cam, Vec3(0, 0, 5)).visible);
    // +y is up in the image.
    CHECK(project(cam, Vec3(0, 0.5, 0)).pixel.y() < 24.0);

    Gen gen(9);
    for (int i = 0; i < 100; ++i) {
        cam.elevation = gen.real(-1.2, 1.2);
        cam.azimuth = gen.real(-3, 3);
        cam.look_at = gen.vec3();
        Mat4 v = camera_matrices(cam).view;
        CHECK((v * v.inverse() - Mat4::Identity()).norm() < 1e-6);
    }
}

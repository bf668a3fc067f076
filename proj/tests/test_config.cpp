#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"

using namespace dsdtex;
using namespace dsdtex::testing;

namespace {

std::string field_of(const std::string& yaml, const std::vector<std::string>& overrides = {}) {
    try {
        parse_config(yaml, overrides);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
    std::string cmd = std::string(DSDTEX_CLI) + " " + args + " > " + log.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

const char* kSmall =
    " --set train.resolution=16 field.levels=4 field.log2_table_size=10 field.max_resolution=64"
    " shading.face_size=8 shading.mip_levels=3 shading.lut_size=16 shading.prefilter_samples=64"
    " shading.lut_samples=64 turntable.resolution=16 train.grad_clip=0";

}  // namespace

TEST_CASE("empty config yields defaults") {
    RunConfig c = parse_config("");
    CHECK(c == RunConfig{});
    CHECK(c.guidance.lambda == 0.5);
    CHECK(c.guidance.omega == 7.5);
    CHECK(c.train.zoom_period == 4);
    CHECK(c.guidance.negative_view == NegativeView::Previous);
}

TEST_CASE("yaml round trip") {
    RunConfig c;
    c.mesh = "meshes/knight.obj";
    c.guidance.prompt = "a knight in armor";
    c.guidance.lambda = 0.25;
    c.guidance.negative_view = NegativeView::Current;
    c.guidance.mode = GuidanceMode::Sds;
    c.guidance.negative_prompts = {"blurry"};
    c.analytic.negative = Rgb{0.1, 0.2, 0.3};
    c.train.iterations = 123;
    c.train.optimizer.learning_rate = 3e-3;
    c.train.face_camera.radius = 0.7;
    c.field.encoding.levels = 6;
    c.shading.lut_size = 48;
    c.background = {0.1, 0.2, 0.3};
    c.bake.vertex_fallback = true;
    RunConfig back = parse_config(config_to_yaml(c));
    CHECK(back == c);
    CHECK(config_to_yaml(back) == config_to_yaml(c));
}

TEST_CASE("keys and overrides") {
    RunConfig c = parse_config("guidance:\n  prompt: a cat\n  negative_view: current\ntrain:\n  iterations: 5\n");
    CHECK(c.guidance.prompt == "a cat");
    CHECK(c.guidance.negative_view == NegativeView::Current);
    CHECK(c.train.iterations == 5);

    RunConfig o = parse_config("train:\n  iterations: 5\n", {"train.iterations=9", "guidance.lambda=0.3",
                                                              "guidance.prompt=a dog"});
    CHECK(o.train.iterations == 9);
    CHECK(o.guidance.lambda == 0.3);
    CHECK(o.guidance.prompt == "a dog");
}

TEST_CASE("config errors name the offending field") {
    CHECK(field_of("guidance:\n  lamda: 0.5\n") == "guidance.lamda");
    CHECK(field_of("train:\n  body_camera:\n    radius: [1, 2]\n") == "train.body_camera.radius");
    CHECK(field_of("guidance:\n  mode: vsd\n") == "guidance.mode");
    CHECK(field_of("guidance:\n  negative_view: sideways\n") == "guidance.negative_view");
    CHECK(field_of("schema_version: 7\n") == "schema_version");
    CHECK(field_of("bogus: 1\n") == "bogus");
    CHECK(field_of("", {"train.iterations"}) == "train.iterations");
    CHECK(field_of("guidance: [1, 2\n") == "<file>");

    RunConfig c;
    c.guidance.prompt = "x";
    CHECK_THROWS_AS(validate_config(c, false), ConfigError);
    c.mesh = "/nonexistent/mesh.obj";
    CHECK_NOTHROW(validate_config(c, false));
    try {
        validate_config(c, true);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "mesh");
    }
    c.guidance.lambda = 1.0;
    CHECK_THROWS_AS(validate_config(c, false), ConfigError);
}

TEST_CASE("cli reports config errors with exit code 2") {
    auto dir = scratch_dir("cli_errors");
    CHECK(run_cli("train --mesh /nonexistent/mesh.obj --prompt x -o " + (dir / "out").string(), dir / "log") == 2);
    CHECK(slurp(dir / "log").find("config error: mesh") != std::string::npos);
    CHECK(run_cli("validate-config --set guidance.lamda=0.1", dir / "log2") == 2);
    CHECK(slurp(dir / "log2").find("guidance.lamda") != std::string::npos);
}

TEST_CASE("cli train smoke run is reproducible") {
    auto dir = scratch_dir("cli_train");
    write_obj(dir / "ball.obj", uv_sphere(8, 16));
    auto args = [&](const std::string& out) {
        return "train --mesh " + (dir / "ball.obj").string() + " --prompt \"a red ball\" --iterations 10 --seed 3 -o " +
               (dir / out).string() + kSmall;
    };
    REQUIRE(run_cli(args("a"), dir / "log_a") == 0);
    REQUIRE(run_cli(args("b"), dir / "log_b") == 0);
    for (const char* f : {"checkpoint.dsdf", "state.bin", "diagnostics.ndjson", "preview.png", "config.yaml"}) {
        CHECK(std::filesystem::exists(dir / "a" / f));
    }
    CHECK(file_checksum(dir / "a" / "checkpoint.dsdf") == file_checksum(dir / "b" / "checkpoint.dsdf"));
    RunConfig saved = load_config(dir / "a" / "config.yaml");
    CHECK(saved.train.iterations == 10);
    CHECK(saved.guidance.prompt == "a red ball");

    REQUIRE(run_cli("bake " + (dir / "a" / "checkpoint.dsdf").string() + " --mesh " + (dir / "ball.obj").string() +
                        " --resolution 16 -o " + (dir / "tex").string(),
                    dir / "log_bake") == 0);
    for (const char* f : {"kd.png", "roughness.png", "metallic.png", "specular.png"})
        CHECK(std::filesystem::exists(dir / "tex" / f));

    REQUIRE(run_cli("turntable " + (dir / "a" / "checkpoint.dsdf").string() + " --mesh " + (dir / "ball.obj").string() +
                        " --poses 3 --resolution 16 -o " + (dir / "turn").string() + kSmall,
                    dir / "log_turn") == 0);
    CHECK(std::filesystem::exists(dir / "turn" / "frame_002.png"));
}

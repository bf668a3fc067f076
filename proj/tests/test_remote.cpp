#include <doctest.h>

#include <atomic>
#include <cstring>
#include <thread>

#include "dsdtex/remote_denoiser.hpp"
#include "dsdtex/trainer.hpp"
#include "support.hpp"

#include <httplib.h>

using namespace dsdtex;
using namespace dsdtex::testing;
using ad::Tensor;

namespace {

enum class Fault { None, MalformedHeader, WrongId, ServerError, Truncated };

// Loopback stand-in for the guidance service: identity codec, echoing noise predictor.
class MockService {
public:
    MockService() {
        auto handle = [this](const char* path, auto fn) {
            server_.Post(path, [this, fn](const httplib::Request& req, httplib::Response& res) {
                ++requests;
                auto in = wire::decode(req.body);
                wire::Message out;
                out.header["request_id"] = in.header.at("request_id");
                fn(in, out);
                reply(out, res);
            });
        };
        handle("/embed_text", [](const wire::Message& in, wire::Message& out) {
            auto e = hash_text_embedding(in.header.at("prompt").get<std::string>());
            out.tensors.push_back({"embedding", Tensor({e.size()}, e)});
        });
        handle("/encode_image", [](const wire::Message& in, wire::Message& out) {
            out.tensors.push_back({"latent", in.tensor("image")});
        });
        handle("/decode_latent", [](const wire::Message& in, wire::Message& out) {
            out.tensors.push_back({"image", in.tensor("latent")});
        });
        handle("/predict_noise", [this](const wire::Message& in, wire::Message& out) {
            last_had_depth = in.find("depth") != nullptr;
            last_omega = in.header.value("omega", -1.0);
            out.tensors.push_back({"eps", in.tensor("z_t")});
        });
        handle("/clip_score", [](const wire::Message&, wire::Message& out) { out.header["score"] = 27.5; });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockService() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

    std::atomic<Fault> fault{Fault::None};
    std::atomic<int> requests{0};
    std::atomic<bool> last_had_depth{false};
    std::atomic<double> last_omega{0.0};

private:
    void reply(wire::Message& out, httplib::Response& res) {
        std::string body = wire::encode(out);
        switch (fault.load()) {
            case Fault::MalformedHeader: body = "{\"request_id\": \"req-1\", oops}\n"; break;
            case Fault::WrongId:
                out.header["request_id"] = "someone-else";
                body = wire::encode(out);
                break;
            case Fault::ServerError:
                res.status = 500;
                body = "inference failed";
                break;
            case Fault::Truncated: body.resize(body.size() - 2); break;
            case Fault::None: break;
        }
        res.set_content(body, "application/octet-stream");
    }

    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

RemoteConfig config_for(const MockService& s, bool depth = false) {
    RemoteConfig c;
    c.endpoint = s.endpoint();
    c.timeout_seconds = 5.0;
    c.depth_conditioning = depth;
    return c;
}

}  // namespace

TEST_CASE("wire round trip is bit-exact for f32 values") {
    Gen gen(1);
    wire::Message m;
    m.header["t"] = 0.25;
    Tensor a = gen.tensor({2, 3, 4});
    for (auto& v : a.data) v = static_cast<float>(v);
    m.tensors.push_back({"a", a});
    m.tensors.push_back({"empty", Tensor::zeros({0})});
    m.tensors.push_back({"s", Tensor({1}, {-7.5})});
    auto body = wire::encode(m);
    auto back = wire::decode(body);
    CHECK(back.header["t"] == 0.25);
    CHECK(back.tensor("a").shape == a.shape);
    CHECK(std::memcmp(back.tensor("a").data.data(), a.data.data(), a.size() * sizeof(double)) == 0);
    CHECK(back.tensor("s")[0] == -7.5);
    CHECK(back.find("missing") == nullptr);
    CHECK_THROWS_AS(back.tensor("missing"), wire::ProtocolError);
    CHECK(wire::encode(back) == body);
}

TEST_CASE("wire decoding reports byte offsets") {
    try {
        wire::decode("{\"tensors\": [], \"x\": ?}\n");
        FAIL("expected a protocol error");
    } catch (const wire::ProtocolError& e) {
        CHECK(e.offset() == 21);
    }
    try {
        wire::decode("{\"tensors\": []}");
        FAIL("expected a protocol error");
    } catch (const wire::ProtocolError& e) {
        CHECK(e.offset() == 15);
    }
    wire::Message m;
    m.tensors.push_back({"x", Tensor::filled({4}, 1.0)});
    auto body = wire::encode(m);
    CHECK_THROWS_AS(wire::decode(body.substr(0, body.size() - 1)), wire::ProtocolError);
    CHECK_THROWS_AS(wire::decode(body + "x"), wire::ProtocolError);
    CHECK_THROWS_AS(wire::decode("{\"tensors\": [{\"name\": \"x\", \"dtype\": \"f16\", \"shape\": [1]}]}\n"), wire::ProtocolError);
}

TEST_CASE("remote client against a loopback service") {
    MockService svc;
    RemoteClient client(config_for(svc));

    SUBCASE("echoed noise comes back bit-exactly") {
        Tensor z({2, 2, 3}, {0.5, -0.25, 1.0, 2.0, 0.125, -3.0, 0.0, 4.0, 0.75, -1.5, 8.0, 0.0625});
        auto eps = client.predict_noise(z, 0.5, hash_text_embedding("x"), std::nullopt, std::nullopt, 7.5);
        CHECK(eps.data == z.data);
        CHECK(svc.last_omega.load() == 7.5);
        CHECK_FALSE(svc.last_had_depth.load());
    }
    SUBCASE("embeddings, codec and score") {
        auto expect = hash_text_embedding("a man in a suit with a belt and tie");
        for (auto& v : expect) v = static_cast<float>(v);
        CHECK(client.embed_text("a man in a suit with a belt and tie") == expect);
        CHECK_THROWS_AS(client.embed_text(""), ValidationError);
        Tensor img = solid_image(4, 4, {0.25, 0.5, 0.75});
        CHECK(client.encode_image(img).data == img.data);
        CHECK(client.decode_latent(img).data == img.data);
        CHECK(client.clip_score(img, "x") == 27.5);
    }
    SUBCASE("malformed header surfaces a protocol error with an offset") {
        svc.fault = Fault::MalformedHeader;
        try {
            client.embed_text("x");
            FAIL("expected a protocol error");
        } catch (const wire::ProtocolError& e) {
            CHECK(e.offset() == 24);
        }
    }
    SUBCASE("request id must be echoed") {
        svc.fault = Fault::WrongId;
        CHECK_THROWS_AS(client.embed_text("x"), wire::ProtocolError);
    }
    SUBCASE("server errors and truncated payloads") {
        svc.fault = Fault::ServerError;
        CHECK_THROWS_AS(client.embed_text("x"), RemoteError);
        svc.fault = Fault::Truncated;
        CHECK_THROWS_AS(client.embed_text("x"), wire::ProtocolError);
    }
}

TEST_CASE("depth flag without a depth map fails before sending") {
    MockService svc;
    RemoteClient client(config_for(svc, true));
    Tensor z = Tensor::zeros({2, 2, 3});
    CHECK_THROWS_AS(client.predict_noise(z, 0.5, {1.0}, std::nullopt, std::nullopt, 1.0), ValidationError);
    CHECK(svc.requests.load() == 0);
    Tensor depth = Tensor::filled({2, 2}, 1.0);
    CHECK_NOTHROW(client.predict_noise(z, 0.5, {1.0}, std::nullopt, depth, 1.0));
    CHECK(svc.last_had_depth.load());
}

TEST_CASE("unreachable service raises a remote error") {
    RemoteConfig c;
    c.endpoint = "http://127.0.0.1:1";
    c.timeout_seconds = 1.0;
    RemoteClient client(c);
    CHECK_THROWS_AS(client.embed_text("x"), RemoteError);
}

TEST_CASE("remote backend maps latent gradients through the decoder") {
    MockService svc;
    RemoteBackend backend(config_for(svc), NoiseSchedule());
    Tensor img = solid_image(2, 2, {0.5, 0.5, 0.5});
    Tensor g = Tensor::filled(img.shape, 0.125);
    auto out = backend.image_gradient(img, img, g);
    for (double v : out.data) CHECK(v == 0.125);
}

TEST_CASE("training runs against the loopback service") {
    MockService svc;
    RemoteBackend backend(config_for(svc, true), NoiseSchedule());
    Scene scene;
    scene.mesh = uv_sphere(8, 16);
    ShadingConfig sc;
    sc.face_size = 8;
    sc.mip_levels = 3;
    sc.lut_size = 16;
    sc.prefilter_samples = 64;
    sc.lut_samples = 64;
    scene.environment = prefilter(CubeMap::constant(8, Vec3::Ones()), sc);
    GuidanceConfig g;
    g.prompt = "a red ball";
    TrainConfig t;
    t.resolution = 16;
    t.iterations = 6;
    FieldConfig fc;
    fc.encoding.log2_table_size = 10;
    TrainState state = TrainState::initial(fc, 3);
    for (int i = 0; i < 6; ++i) {
        auto d = train_step(state, scene, backend, g, t);
        CHECK_FALSE(d.skipped);
        CHECK(std::isfinite(d.loss));
    }
    CHECK(state.field.parameters().all_finite());
    CHECK(svc.last_had_depth.load());

    svc.fault = Fault::ServerError;
    auto before = state.field.parameters().b2.data;
    auto d = train_step(state, scene, backend, g, t);
    CHECK(d.skipped);
    CHECK(state.field.parameters().b2.data == before);
}

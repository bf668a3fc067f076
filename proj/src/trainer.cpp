#include "dsdtex/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "dsdtex/image_io.hpp"
#include "dsdtex/rasterizer.hpp"

namespace dsdtex {

void TrainConfig::validate() const {
    if (iterations < 0) throw std::invalid_argument("train.iterations must be >= 0");
    if (zoom_period < 1) throw std::invalid_argument("train.zoom_period must be >= 1");
    if (!(optimizer.learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be > 0");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
        throw std::invalid_argument("train.beta1 and train.beta2 must lie in [0, 1)");
    if (!(optimizer.eps > 0.0)) throw std::invalid_argument("train.eps must be > 0");
    if (optimizer.weight_decay < 0.0) throw std::invalid_argument("train.weight_decay must be >= 0");
    if (albedo_weight < 0.0 || albedo_delta < 0.0) throw std::invalid_argument("train.albedo_weight and train.albedo_delta must be >= 0");
    if (grad_clip < 0.0) throw std::invalid_argument("train.grad_clip must be >= 0");
    if (resolution < 1) throw std::invalid_argument("train.resolution must be >= 1");
    if (checkpoint_every < 0 || preview_every < 0) throw std::invalid_argument("train.checkpoint_every and train.preview_every must be >= 0");
}

bool is_zoom_step(std::int64_t iteration, int period) { return iteration % period == 0; }

std::string step_prompt(const std::string& prompt, std::int64_t iteration, int period) {
    return is_zoom_step(iteration, period) ? std::string(kFacePrefix) + prompt : prompt;
}

void adamw_update(std::span<ad::Tensor* const> params, std::span<const ad::Tensor> grads, AdamWState& state,
                  const AdamWConfig& c) {
    if (state.m.empty()) {
        for (auto* p : params) {
            state.m.push_back(ad::Tensor::zeros(p->shape));
            state.v.push_back(ad::Tensor::zeros(p->shape));
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        const auto& g = grads[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= c.learning_rate * c.weight_decay * p[i];
            p[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

double clip_global_norm(std::vector<ad::Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.data) sq += v * v;
    double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        double s = max_norm / norm;
        for (auto& g : grads)
            for (double& v : g.data) v *= s;
    }
    return norm;
}

std::string StepDiagnostics::to_json() const {
    nlohmann::json j{{"step", step},         {"loss", loss},           {"regularizer", regularizer},
                     {"camera", camera},     {"prompt", prompt},       {"t", t},
                     {"grad_norm", grad_norm}, {"hit_pixels", hit_pixels}, {"skipped", skipped}};
    if (!reason.empty()) j["reason"] = reason;
    return j.dump();
}

TrainState TrainState::initial(const FieldConfig& config, std::uint64_t seed) {
    // Separate streams for parameter init and the training loop.
    TrainState s{MaterialField(config, seed), {}, {}, 0, Rng(seed ^ 0x9E3779B97F4A7C15ull), {}};
    return s;
}

Camera sample_step_camera(Rng& rng, const Mesh& mesh, const TrainConfig& config, std::int64_t iteration) {
    Camera cam = is_zoom_step(iteration, config.zoom_period)
                     ? sample_face_camera(rng, mesh.face_center, config.face_camera)
                     : sample_body_camera(rng, config.body_camera, Vec3::Zero());
    cam.width = cam.height = config.resolution;
    return cam;
}

ShadedImage render_field(const MaterialField& field, const Scene& scene, const Camera& camera) {
    auto gbuffer = rasterize(scene.mesh, camera);
    std::vector<Vec3> points;
    for (const auto& px : gbuffer.pixels)
        if (px.hit) points.push_back(to_unit_cube(px.position));
    auto materials = field.evaluate(points);
    return shade(gbuffer, materials, scene.environment, camera, scene.background);
}

namespace {

// Exact piecewise sRGB transfer on [0, 1] written with relu so it stays differentiable.
ad::NodeId srgb_node(ad::Graph& g, ad::NodeId linear) {
    constexpr double c = 0.0031308;
    auto x = g.clamp(linear, 0.0, 1.0, ad::ClampGrad::StraightThrough);
    auto above = g.relu(g.offset(x, -c));
    auto lo = g.sub(x, above);
    auto hi = g.offset(above, c);
    auto curve = g.offset(g.scale(g.pow(hi, 1.0 / 2.4), 1.055), -0.055 - 12.92 * c);
    return g.add(g.scale(lo, 12.92), curve);
}

ad::Tensor depth_tensor(const GBuffer& gb) {
    return ad::Tensor({static_cast<std::size_t>(gb.height), static_cast<std::size_t>(gb.width)}, depth_map(gb));
}

bool all_finite(const std::vector<ad::Tensor>& ts) {
    for (const auto& t : ts)
        for (double v : t.data)
            if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

StepDiagnostics train_step(TrainState& state, const Scene& scene, GuidanceBackend& backend,
                           const GuidanceConfig& guidance, const TrainConfig& config) {
    StepDiagnostics diag;
    const std::int64_t i = state.iteration;
    diag.step = i;
    const bool zoom = is_zoom_step(i, config.zoom_period);
    diag.camera = zoom ? "face" : "body";
    diag.prompt = step_prompt(guidance.prompt, i, config.zoom_period);

    Camera camera = sample_step_camera(state.rng, scene.mesh, config, i);
    auto gbuffer = rasterize(scene.mesh, camera);
    auto lighting = gather_lighting(gbuffer, scene.environment, camera);
    const std::size_t n = lighting.count();
    diag.hit_pixels = n;

    const MaterialField& field = state.field;
    std::optional<FieldParameters> before;
    if (guidance.negative_view == NegativeView::Current) before = field.parameters();
    ad::Graph g;
    auto params = field.declare_parameters(g);
    ad::NodeId image_node = 0, smooth = 0;
    if (n > 0) {
        auto out = field.build(g, params, lighting.unit_points);
        auto radiance = shade_graph(g, lighting, {out.albedo, out.roughness, out.specular}, field.config().roughness_min);
        image_node = guidance.srgb_latent ? srgb_node(g, radiance) : radiance;
        if (config.albedo_weight > 0.0) {
            AlbedoBuilder albedo = [&](ad::Graph& gg, std::span<const Vec3> pts) {
                return field.build(gg, params, pts).albedo;
            };
            smooth = albedo_smoothness(g, albedo, lighting.unit_points, config.albedo_delta, state.rng);
        }
    }
    g.forward(field.parameter_inputs());

    // z^i: background everywhere, shaded radiance on hit pixels.
    const auto w = static_cast<std::size_t>(camera.width), h = static_cast<std::size_t>(camera.height);
    auto composite = [&](const ad::Tensor* hits) {
        ad::Tensor out = ad::Tensor::zeros({h, w, 3});
        for (std::size_t p = 0; p < w * h; ++p)
            for (int c = 0; c < 3; ++c) {
                double b = scene.background[c];
                out[p * 3 + c] = guidance.srgb_latent ? linear_to_srgb(b) : b;
            }
        if (hits)
            for (std::size_t r = 0; r < n; ++r)
                for (int c = 0; c < 3; ++c) out[lighting.pixel_index[r] * 3 + c] = (*hits)[r * 3 + c];
        return out;
    };
    ad::Tensor image = composite(n > 0 ? &g.value(image_node) : nullptr);
    if (n > 0 && config.albedo_weight > 0.0) diag.regularizer = g.value(smooth)[0];
    std::optional<ad::Tensor> depth;
    if (guidance.depth_conditioning) depth = depth_tensor(gbuffer);

    const double t = uniform(state.rng, guidance.t_min, guidance.t_max);
    diag.t = t;

    auto finish = [&](ad::Tensor latent) {
        state.cache.latent = std::move(latent);
        state.cache.depth = depth;
        state.cache.parameters = std::move(before);
        state.cache.stamp = i;
        state.iteration = i + 1;
        state.history.push_back(diag);
    };
    auto skip = [&](const std::string& reason, ad::Tensor latent) {
        diag.skipped = true;
        diag.reason = reason;
        spdlog::warn("step {} skipped: {}", i, reason);
        finish(std::move(latent));
        return diag;
    };

    ad::Tensor latent;
    try {
        latent = backend.encode_image(image);
    } catch (const GuidanceError& e) {
        return skip(e.what(), state.cache.latent);
    }
    ad::Tensor eps = ad::Tensor::zeros(latent.shape);
    fill_standard_normal(state.rng, eps.data);
    ad::Tensor neg_latent = latent;
    std::optional<ad::Tensor> neg_depth = depth;
    if (guidance.mode == GuidanceMode::Dsd && state.cache.valid()) {
        if (guidance.negative_view == NegativeView::Previous || !state.cache.parameters) {
            neg_latent = state.cache.latent;
            neg_depth = state.cache.depth;
        } else if (n > 0) {
            // Previous iterate re-rendered from this step's camera.
            MaterialField prev(field.config(), *state.cache.parameters);
            ad::Graph pg;
            auto pp = prev.declare_parameters(pg);
            auto out = prev.build(pg, pp, lighting.unit_points);
            auto radiance = shade_graph(pg, lighting, {out.albedo, out.roughness, out.specular}, prev.config().roughness_min);
            auto node = guidance.srgb_latent ? srgb_node(pg, radiance) : radiance;
            pg.forward(prev.parameter_inputs());
            try {
                neg_latent = backend.encode_image(composite(&pg.value(node)));
            } catch (const GuidanceError& e) {
                return skip(e.what(), latent);
            }
        }
    }

    try {
        const double alpha = backend.alpha(t);
        const double wt = weight_of(guidance.weight, alpha);
        DenoiserRequest pos{add_noise(latent, eps, alpha), backend.embed_text(diag.prompt), t, depth, false};
        ad::Tensor eps_pos = backend.predict_guided(pos, guidance.omega);
        ad::Tensor latent_grad;
        if (guidance.mode == GuidanceMode::Dsd) {
            DenoiserRequest neg{add_noise(neg_latent, eps, alpha), backend.embed_text(guidance.negative_prompt()), t,
                                neg_depth, false};
            ad::Tensor eps_neg = backend.predict_guided(neg, guidance.omega);
            latent_grad = dsd_gradient(eps_pos, eps_neg, eps, guidance.lambda, wt);
            diag.loss = dsd_loss(eps_pos, eps_neg, eps, guidance.lambda, wt);
        } else {
            latent_grad = sds_gradient(eps_pos, eps, wt);
            diag.loss = dsd_loss(eps_pos, eps, eps, 0.0, wt);
        }

        if (n == 0) return skip("no surface visible", latent);
        ad::Tensor image_grad = backend.image_gradient(image, latent, latent_grad);
        ad::Tensor seed = ad::Tensor::zeros({n, 3});
        for (std::size_t r = 0; r < n; ++r)
            for (int c = 0; c < 3; ++c) seed[r * 3 + c] = image_grad[lighting.pixel_index[r] * 3 + c];

        auto grads = g.backward(image_node, seed);
        if (config.albedo_weight > 0.0) {
            auto reg = g.backward(smooth, ad::Tensor::scalar(config.albedo_weight));
            for (std::size_t k = 0; k < grads.size(); ++k)
                for (std::size_t j = 0; j < grads[k].size(); ++j) grads[k][j] += reg[k][j];
        }
        if (!all_finite(grads)) return skip("non-finite gradient", latent);
        diag.grad_norm = clip_global_norm(grads, config.grad_clip);
        auto tensors = state.field.parameters().tensors();
        adamw_update(tensors, grads, state.optimizer, config.optimizer);
    } catch (const GuidanceError& e) {
        return skip(e.what(), latent);
    }
    finish(std::move(latent));
    return diag;
}

namespace {

constexpr char kStateMagic[4] = {'D', 'S', 'D', 'S'};
constexpr std::uint32_t kStateVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("train state truncated");
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
    auto n = get<std::uint64_t>(is);
    if (n > (1ull << 32)) throw std::runtime_error("train state string too long");
    std::string s(n, '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw std::runtime_error("train state truncated");
    return s;
}

void put_tensor(std::ostream& os, const ad::Tensor& t) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(os, d);
    for (double v : t.data) put(os, v);
}

ad::Tensor get_tensor(std::istream& is) {
    auto rank = get<std::uint32_t>(is);
    if (rank > 8) throw std::runtime_error("train state tensor rank too large");
    ad::Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is);
    std::vector<double> data(ad::element_count(shape));
    for (auto& v : data) v = get<double>(is);
    return ad::Tensor(std::move(shape), std::move(data));
}

}  // namespace

void save_train_state(const std::filesystem::path& path, const TrainState& s) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write train state " + path.string());
        os.write(kStateMagic, 4);
        put(os, kStateVersion);
        put_string(os, field_config_to_json(s.field.config()));
        put<std::int64_t>(os, s.iteration);
        put<std::int64_t>(os, s.optimizer.step);
        put_string(os, serialize_rng(s.rng));
        for (const auto* t : s.field.parameters().tensors()) put_tensor(os, *t);
        put<std::uint8_t>(os, s.optimizer.m.empty() ? 0 : 1);
        for (const auto& t : s.optimizer.m) put_tensor(os, t);
        for (const auto& t : s.optimizer.v) put_tensor(os, t);
        put<std::int64_t>(os, s.cache.stamp);
        put_tensor(os, s.cache.latent);
        put<std::uint8_t>(os, s.cache.depth ? 1 : 0);
        if (s.cache.depth) put_tensor(os, *s.cache.depth);
        put<std::uint8_t>(os, s.cache.parameters ? 1 : 0);
        if (s.cache.parameters)
            for (const auto* t : s.cache.parameters->tensors()) put_tensor(os, *t);
        if (!os) throw std::runtime_error("cannot write train state " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

TrainState load_train_state(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read train state " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kStateMagic, 4) != 0)
        throw std::runtime_error("not a train state file: " + path.string());
    if (get<std::uint32_t>(is) != kStateVersion) throw std::runtime_error("unsupported train state version");
    FieldConfig config = field_config_from_json(get_string(is));
    auto iteration = get<std::int64_t>(is);
    auto adam_step = get<std::int64_t>(is);
    Rng rng = deserialize_rng(get_string(is));
    FieldParameters params;
    for (auto* t : params.tensors()) *t = get_tensor(is);
    AdamWState opt;
    opt.step = adam_step;
    if (get<std::uint8_t>(is)) {
        for (std::size_t k = 0; k < FieldParameters::kNames.size(); ++k) opt.m.push_back(get_tensor(is));
        for (std::size_t k = 0; k < FieldParameters::kNames.size(); ++k) opt.v.push_back(get_tensor(is));
    }
    NegativeCache cache;
    cache.stamp = get<std::int64_t>(is);
    cache.latent = get_tensor(is);
    if (get<std::uint8_t>(is)) cache.depth = get_tensor(is);
    if (get<std::uint8_t>(is)) {
        cache.parameters.emplace();
        for (auto* t : cache.parameters->tensors()) *t = get_tensor(is);
    }
    if (!params.all_finite()) throw std::runtime_error("train state holds non-finite parameters");
    return TrainState{MaterialField(config, std::move(params)), std::move(opt), std::move(cache), iteration, rng, {}};
}

RunReport run(TrainState& state, const Scene& scene, GuidanceBackend& backend, const GuidanceConfig& guidance,
              const TrainConfig& config, const std::filesystem::path& output_dir) {
    config.validate();
    guidance.validate();
    if (guidance.prompt.empty()) throw std::invalid_argument("prompt must be nonempty");
    std::filesystem::create_directories(output_dir);
    RunReport report;
    report.checkpoint = output_dir / "checkpoint.dsdf";
    const auto state_path = output_dir / "state.bin";
    std::ofstream log(output_dir / "diagnostics.ndjson", state.iteration == 0 ? std::ios::trunc : std::ios::app);

    while (state.iteration < config.iterations) {
        auto diag = train_step(state, scene, backend, guidance, config);
        log << diag.to_json() << '\n';
        ++report.steps;
        if (diag.skipped) ++report.skipped;
        if (config.preview_every > 0 && state.iteration % config.preview_every == 0) {
            Camera cam;
            cam.radius = config.body_camera.radius;
            cam.elevation = 0.5 * (config.body_camera.elevation.lo + config.body_camera.elevation.hi);
            cam.width = cam.height = config.resolution;
            char name[32];
            std::snprintf(name, sizeof name, "step_%06lld.png", static_cast<long long>(state.iteration));
            write_shaded_png(output_dir / "previews" / name, render_field(state.field, scene, cam));
        }
        if (config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0 &&
            state.iteration < config.iterations) {
            log.flush();
            save_checkpoint(report.checkpoint, state.field);
            save_train_state(state_path, state);
        }
    }
    log.flush();
    save_checkpoint(report.checkpoint, state.field);
    save_train_state(state_path, state);
    spdlog::info("trained to iteration {} ({} steps, {} skipped)", state.iteration, report.steps, report.skipped);
    return report;
}

}  // namespace dsdtex

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsdtex/autodiff.hpp"
#include "dsdtex/geometry.hpp"
#include "dsdtex/guidance.hpp"
#include "dsdtex/material_field.hpp"
#include "dsdtex/shading.hpp"

namespace dsdtex {

struct AdamWConfig {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    bool operator==(const AdamWConfig&) const = default;
};

struct TrainConfig {
    std::int64_t iterations = 10000;
    AdamWConfig optimizer;
    int zoom_period = 4;
    double albedo_weight = 0.01;
    double albedo_delta = 0.01;
    // Global-norm clip; 0 disables.
    double grad_clip = 1.0;
    int resolution = 64;
    std::uint64_t seed = 0;
    std::int64_t checkpoint_every = 500;
    // 0 disables preview renders.
    std::int64_t preview_every = 0;
    BodyCameraConfig body_camera;
    FaceCameraConfig face_camera;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

inline constexpr std::string_view kFacePrefix = "the face of ";

bool is_zoom_step(std::int64_t iteration, int period);
std::string step_prompt(const std::string& prompt, std::int64_t iteration, int period);

struct AdamWState {
    std::vector<ad::Tensor> m;
    std::vector<ad::Tensor> v;
    std::int64_t step = 0;
};

// Applies one decoupled-weight-decay Adam update in place.
void adamw_update(std::span<ad::Tensor* const> params, std::span<const ad::Tensor> grads, AdamWState& state,
                  const AdamWConfig& config);
// Scales grads so their joint L2 norm is at most max_norm; returns the norm before scaling.
double clip_global_norm(std::vector<ad::Tensor>& grads, double max_norm);

// Latent of the previous render, constant with respect to the parameters.
struct NegativeCache {
    ad::Tensor latent;
    std::optional<ad::Tensor> depth;
    // Parameters that produced the cached render; kept only for NegativeView::Current.
    std::optional<FieldParameters> parameters;
    std::int64_t stamp = -1;

    bool valid() const { return stamp >= 0; }
};

struct StepDiagnostics {
    std::int64_t step = 0;
    double loss = 0.0;
    double regularizer = 0.0;
    std::string camera;  // "body" or "face"
    std::string prompt;
    double t = 0.0;
    double grad_norm = 0.0;
    std::size_t hit_pixels = 0;
    bool skipped = false;
    std::string reason;

    std::string to_json() const;
};

struct TrainState {
    MaterialField field;
    AdamWState optimizer;
    NegativeCache cache;
    std::int64_t iteration = 0;
    Rng rng;
    std::vector<StepDiagnostics> history;

    static TrainState initial(const FieldConfig& config, std::uint64_t seed);
};

struct Scene {
    Mesh mesh;
    EnvironmentLight environment;
    Vec3 background = Vec3::Ones();
};

StepDiagnostics train_step(TrainState& state, const Scene& scene, GuidanceBackend& backend,
                           const GuidanceConfig& guidance, const TrainConfig& config);

// Full state in 64-bit precision, for exact resumption.
void save_train_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_train_state(const std::filesystem::path& path);

struct RunReport {
    std::filesystem::path checkpoint;
    std::int64_t steps = 0;
    std::int64_t skipped = 0;
};

// Runs train_step until state.iteration reaches config.iterations. Writes
// checkpoint.dsdf and state.bin every checkpoint_every steps and at the end,
// diagnostics.ndjson (appended) and optional previews/step_XXXXXX.png.
RunReport run(TrainState& state, const Scene& scene, GuidanceBackend& backend, const GuidanceConfig& guidance,
              const TrainConfig& config, const std::filesystem::path& output_dir);

// Shaded render of the field from an arbitrary camera.
ShadedImage render_field(const MaterialField& field, const Scene& scene, const Camera& camera);

// Camera used at `iteration`, drawn from `rng`.
Camera sample_step_camera(Rng& rng, const Mesh& mesh, const TrainConfig& config, std::int64_t iteration);

}  // namespace dsdtex

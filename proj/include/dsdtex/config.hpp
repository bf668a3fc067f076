#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsdtex/guidance.hpp"
#include "dsdtex/material_field.hpp"
#include "dsdtex/remote_denoiser.hpp"
#include "dsdtex/shading.hpp"
#include "dsdtex/trainer.hpp"

namespace dsdtex {

// Bad configuration; `field` is the dotted path of the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

inline constexpr int kConfigSchemaVersion = 1;

using Rgb = std::array<double, 3>;

// Data mixtures for the analytic backend, as solid-color images.
struct AnalyticConfig {
    Rgb target{0.8, 0.1, 0.1};
    double target_variance = 0.0;
    // When set, the negative prompt embedding is bound to this color.
    std::optional<Rgb> negative;
    double negative_variance = 0.0;
    Rgb unconditional{0.5, 0.5, 0.5};
    double unconditional_variance = 0.25;

    bool operator==(const AnalyticConfig&) const = default;
};

enum class BackendKind { Analytic, Remote };

struct BakeConfig {
    int resolution = 512;
    bool vertex_fallback = false;

    bool operator==(const BakeConfig&) const = default;
};

struct TurntableConfig {
    int poses = 100;
    int resolution = 256;

    bool operator==(const TurntableConfig&) const = default;
};

struct RunConfig {
    int schema_version = kConfigSchemaVersion;
    std::string mesh;
    std::string output_dir = "out";
    // Directory of cube faces; empty means constant white radiance.
    std::string environment;
    Rgb background{1.0, 1.0, 1.0};
    BackendKind backend = BackendKind::Analytic;
    RemoteConfig remote;
    AnalyticConfig analytic;
    GuidanceConfig guidance;
    TrainConfig train;
    FieldConfig field;
    ShadingConfig shading;
    BakeConfig bake;
    TurntableConfig turntable;

    bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
std::string config_to_yaml(const RunConfig& config);

// Checks ranges and cross-field rules; with `check_files`, also that referenced paths exist.
void validate_config(const RunConfig& config, bool check_files);

}  // namespace dsdtex

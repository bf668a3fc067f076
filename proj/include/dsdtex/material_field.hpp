#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsdtex/autodiff.hpp"
#include "dsdtex/geometry.hpp"

namespace dsdtex {

struct HashEncodingConfig {
    int levels = 8;
    int log2_table_size = 14;
    int features = 2;
    int base_resolution = 16;
    int max_resolution = 256;

    void validate() const;
    bool operator==(const HashEncodingConfig&) const = default;
};

struct FieldConfig {
    HashEncodingConfig encoding;
    int hidden_units = 32;
    double roughness_min = 0.08;
    double init_feature_scale = 1e-4;
    double init_albedo = 0.5;
    double init_roughness = 0.5;
    double init_metallic = 0.1;

    void validate() const;
    bool operator==(const FieldConfig&) const = default;
};

// Multiresolution hash grid over the unit cube. Table rows for level l live at
// [l*T, (l+1)*T). Coarse levels whose full grid fits in T use dense indexing.
class HashEncoding {
public:
    explicit HashEncoding(HashEncodingConfig config);

    struct Lookup {
        // 8 corner rows and trilinear weights per (point, level).
        std::vector<std::uint32_t> rows;
        std::vector<double> weights;
        std::size_t clamped = 0;
    };

    Lookup lookup(std::span<const Vec3> unit_points) const;

    const HashEncodingConfig& config() const { return config_; }
    const std::vector<int>& resolutions() const { return resolutions_; }
    std::size_t table_size() const { return std::size_t{1} << config_.log2_table_size; }
    std::size_t table_rows() const { return table_size() * static_cast<std::size_t>(config_.levels); }
    std::size_t output_dim() const { return static_cast<std::size_t>(config_.levels * config_.features); }
    // Row index of integer grid vertex `corner` on `level`.
    std::uint32_t corner_row(int level, const std::array<std::int64_t, 3>& corner) const;

private:
    HashEncodingConfig config_;
    std::vector<int> resolutions_;
};

struct MaterialSample {
    Vec3 albedo = Vec3::Zero();  // k_d
    double roughness = 0.0;
    double metallic = 0.0;
    Vec3 specular = Vec3::Zero();  // k_s

    static Vec3 specular_from(const Vec3& albedo, double metallic);
};

// Learnable tensors, in checkpoint order.
struct FieldParameters {
    ad::Tensor hash_table;  // [levels*T, F]
    ad::Tensor w1;          // [levels*F, hidden]
    ad::Tensor b1;          // [hidden]
    ad::Tensor w2;          // [hidden, 5]
    ad::Tensor b2;          // [5]

    static constexpr std::array<const char*, 5> kNames{"hash_table", "w1", "b1", "w2", "b2"};

    std::array<ad::Tensor*, 5> tensors() { return {&hash_table, &w1, &b1, &w2, &b2}; }
    std::array<const ad::Tensor*, 5> tensors() const { return {&hash_table, &w1, &b1, &w2, &b2}; }
    std::size_t parameter_count() const;
    bool all_finite() const;
};

// Maps a point of the normalized (unit ball) mesh frame into the unit cube.
inline Vec3 to_unit_cube(const Vec3& p) { return 0.5 * (p + Vec3::Ones()); }

class MaterialField {
public:
    MaterialField(FieldConfig config, std::uint64_t seed);
    MaterialField(FieldConfig config, FieldParameters params);

    struct ParamNodes {
        ad::NodeId hash_table, w1, b1, w2, b2;
    };
    struct Outputs {
        ad::NodeId albedo;     // [N, 3]
        ad::NodeId roughness;  // [N, 1]
        ad::NodeId metallic;   // [N, 1]
        ad::NodeId specular;   // [N, 3]
    };

    // Declares the five parameter tensors as requires_grad inputs; bind them with
    // forward(parameter_inputs()) when no other inputs precede them.
    ParamNodes declare_parameters(ad::Graph& graph) const;
    std::vector<ad::Tensor> parameter_inputs() const;
    Outputs build(ad::Graph& graph, const ParamNodes& params, std::span<const Vec3> unit_points) const;

    // Concatenated per-level features (levels*F values).
    std::vector<double> encode(const Vec3& unit_point) const;
    std::vector<MaterialSample> evaluate(std::span<const Vec3> unit_points) const;
    MaterialSample eval_material(const Vec3& unit_point) const;

    const FieldConfig& config() const { return config_; }
    const HashEncoding& encoding() const { return encoding_; }
    const FieldParameters& parameters() const { return params_; }
    FieldParameters& parameters() { return params_; }
    std::size_t clamped_queries() const { return clamped_->load(); }

private:
    FieldConfig config_;
    HashEncoding encoding_;
    FieldParameters params_;
    std::shared_ptr<std::atomic<std::size_t>> clamped_ = std::make_shared<std::atomic<std::size_t>>(0);
};

// k_s = m * k_d + (1 - m) * 0.04 per channel; albedo [N,3], metallic [N,1].
ad::NodeId specular_node(ad::Graph& graph, ad::NodeId albedo, ad::NodeId metallic);

using AlbedoBuilder = std::function<ad::NodeId(ad::Graph&, std::span<const Vec3>)>;

// Mean over the batch of || k_d(x) - k_d(x + delta*u) ||_1, u ~ U[-1,1]^3 restricted
// to the axes where `axis_mask` is nonzero. Returns a scalar node.
ad::NodeId albedo_smoothness(ad::Graph& graph, const AlbedoBuilder& albedo, std::span<const Vec3> unit_points,
                             double delta, Rng& rng, const Vec3& axis_mask = Vec3::Ones());

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Checkpoint layout (all integers little-endian):
//   magic "DSDF" | u32 version | u32 config_len | config JSON (UTF-8)
//   | u32 tensor_count | per tensor: u32 name_len, name, u32 rank, u32 dims[rank]
//   | tensor payloads as f32, in the same order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const MaterialField& field);
MaterialField load_checkpoint(const std::filesystem::path& path);

std::string field_config_to_json(const FieldConfig& config);
FieldConfig field_config_from_json(const std::string& json);

}  // namespace dsdtex

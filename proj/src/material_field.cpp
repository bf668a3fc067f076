#include "dsdtex/material_field.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace dsdtex {

void HashEncodingConfig::validate() const {
    if (levels < 1) throw std::invalid_argument("encoding.levels must be >= 1");
    if (log2_table_size < 4 || log2_table_size > 24) throw std::invalid_argument("encoding.log2_table_size out of [4, 24]");
    if (features < 1) throw std::invalid_argument("encoding.features must be >= 1");
    if (base_resolution < 1) throw std::invalid_argument("encoding.base_resolution must be >= 1");
    if (levels > 1 && max_resolution - base_resolution < levels - 1)
        throw std::invalid_argument("encoding.max_resolution too close to base_resolution for strictly increasing levels");
}

void FieldConfig::validate() const {
    encoding.validate();
    if (hidden_units < 1) throw std::invalid_argument("field.hidden_units must be >= 1");
    if (!(roughness_min > 0.0 && roughness_min < 1.0)) throw std::invalid_argument("field.roughness_min must be in (0, 1)");
    auto open01 = [](double v) { return v > 0.0 && v < 1.0; };
    if (!open01(init_albedo) || !open01(init_metallic)) throw std::invalid_argument("field init values must be in (0, 1)");
    if (!(init_roughness > roughness_min && init_roughness < 1.0))
        throw std::invalid_argument("field.init_roughness must be in (roughness_min, 1)");
}

HashEncoding::HashEncoding(HashEncodingConfig config) : config_(config) {
    config_.validate();
    const int L = config_.levels;
    double growth = L > 1 ? std::exp((std::log(static_cast<double>(config_.max_resolution)) -
                                      std::log(static_cast<double>(config_.base_resolution))) /
                                     (L - 1))
                          : 1.0;
    for (int l = 0; l < L; ++l) {
        int res = l == L - 1 && L > 1 ? config_.max_resolution
                                      : static_cast<int>(std::floor(config_.base_resolution * std::pow(growth, l) + 1e-9));
        if (!resolutions_.empty()) res = std::max(res, resolutions_.back() + 1);
        resolutions_.push_back(res);
    }
}

std::uint32_t HashEncoding::corner_row(int level, const std::array<std::int64_t, 3>& c) const {
    const std::uint64_t T = table_size();
    const std::uint64_t side = static_cast<std::uint64_t>(resolutions_[level]) + 1;
    std::uint64_t local;
    if (side * side * side <= T) {
        local = static_cast<std::uint64_t>(c[0]) + side * (static_cast<std::uint64_t>(c[1]) + side * static_cast<std::uint64_t>(c[2]));
    } else {
        constexpr std::uint64_t primes[3] = {1u, 2654435761u, 805459861u};
        std::uint64_t h = 0;
        for (int a = 0; a < 3; ++a) h ^= static_cast<std::uint64_t>(c[a]) * primes[a];
        local = h % T;
    }
    return static_cast<std::uint32_t>(static_cast<std::uint64_t>(level) * T + local);
}

HashEncoding::Lookup HashEncoding::lookup(std::span<const Vec3> unit_points) const {
    const int L = config_.levels;
    Lookup out;
    out.rows.resize(unit_points.size() * L * 8);
    out.weights.resize(out.rows.size());
    std::size_t k = 0;
    for (const auto& raw : unit_points) {
        Vec3 x = raw;
        if (!(raw.array() >= 0.0).all() || !(raw.array() <= 1.0).all()) {
            ++out.clamped;
            x = raw.cwiseMax(0.0).cwiseMin(1.0);
        }
        for (int l = 0; l < L; ++l) {
            const int res = resolutions_[l];
            std::array<std::int64_t, 3> cell;
            std::array<double, 3> frac;
            for (int a = 0; a < 3; ++a) {
                double pos = x[a] * res;
                auto c = std::min(static_cast<std::int64_t>(std::floor(pos)), static_cast<std::int64_t>(res - 1));
                cell[a] = c;
                frac[a] = pos - static_cast<double>(c);
            }
            for (int corner = 0; corner < 8; ++corner) {
                std::array<std::int64_t, 3> c = cell;
                double w = 1.0;
                for (int a = 0; a < 3; ++a) {
                    bool hi = (corner >> a) & 1;
                    c[a] += hi;
                    w *= hi ? frac[a] : 1.0 - frac[a];
                }
                out.rows[k] = corner_row(l, c);
                out.weights[k] = w;
                ++k;
            }
        }
    }
    return out;
}

Vec3 MaterialSample::specular_from(const Vec3& albedo, double metallic) {
    Vec3 ks;
    for (int c = 0; c < 3; ++c) ks[c] = metallic * albedo[c] + (1.0 - metallic) * 0.04;
    return ks;
}

std::size_t FieldParameters::parameter_count() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += t->size();
    return n;
}

bool FieldParameters::all_finite() const {
    for (const auto* t : tensors())
        for (double v : t->data)
            if (!std::isfinite(v)) return false;
    return true;
}

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

constexpr std::size_t kOutputs = 5;

}  // namespace

MaterialField::MaterialField(FieldConfig config, std::uint64_t seed) : config_(config), encoding_(config.encoding) {
    config_.validate();
    Rng rng(seed);
    const std::size_t rows = encoding_.table_rows();
    const std::size_t F = static_cast<std::size_t>(config_.encoding.features);
    const std::size_t in = encoding_.output_dim();
    const std::size_t H = static_cast<std::size_t>(config_.hidden_units);

    auto fill = [&](ad::Tensor& t, ad::Shape shape, double bound) {
        t = ad::Tensor::zeros(std::move(shape));
        t.requires_grad = true;
        for (auto& v : t.data) v = uniform(rng, -bound, bound);
    };
    fill(params_.hash_table, {rows, F}, config_.init_feature_scale);
    fill(params_.w1, {in, H}, 1.0 / std::sqrt(static_cast<double>(in)));
    fill(params_.b1, {H}, 1.0 / std::sqrt(static_cast<double>(in)));
    fill(params_.w2, {H, kOutputs}, 1.0 / std::sqrt(static_cast<double>(H)));

    // Output bias hits the target material exactly for zero features.
    double rough_u = (config_.init_roughness - config_.roughness_min) / (1.0 - config_.roughness_min);
    std::array<double, kOutputs> target{logit(config_.init_albedo), logit(config_.init_albedo), logit(config_.init_albedo),
                                        logit(rough_u), logit(config_.init_metallic)};
    params_.b2 = ad::Tensor::zeros({kOutputs});
    params_.b2.requires_grad = true;
    for (std::size_t o = 0; o < kOutputs; ++o) {
        double hidden_contrib = 0.0;
        for (std::size_t h = 0; h < H; ++h) hidden_contrib += std::max(params_.b1[h], 0.0) * params_.w2[h * kOutputs + o];
        params_.b2[o] = target[o] - hidden_contrib;
    }
}

MaterialField::MaterialField(FieldConfig config, FieldParameters params)
    : config_(config), encoding_(config.encoding), params_(std::move(params)) {
    config_.validate();
    const std::size_t in = encoding_.output_dim();
    const std::size_t H = static_cast<std::size_t>(config_.hidden_units);
    const std::array<ad::Shape, 5> expected{ad::Shape{encoding_.table_rows(), static_cast<std::size_t>(config_.encoding.features)},
                                            ad::Shape{in, H}, ad::Shape{H}, ad::Shape{H, kOutputs}, ad::Shape{kOutputs}};
    auto ts = params_.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i]->shape != expected[i])
            throw std::invalid_argument(std::string("parameter ") + FieldParameters::kNames[i] + " has shape " +
                                        ad::to_string(ts[i]->shape) + ", expected " + ad::to_string(expected[i]));
        ts[i]->requires_grad = true;
    }
    if (!params_.all_finite()) throw std::invalid_argument("field parameters contain NaN or Inf");
}

MaterialField::ParamNodes MaterialField::declare_parameters(ad::Graph& graph) const {
    ParamNodes p{};
    p.hash_table = graph.input(params_.hash_table.shape, true, "hash_table");
    p.w1 = graph.input(params_.w1.shape, true, "w1");
    p.b1 = graph.input(params_.b1.shape, true, "b1");
    p.w2 = graph.input(params_.w2.shape, true, "w2");
    p.b2 = graph.input(params_.b2.shape, true, "b2");
    return p;
}

std::vector<ad::Tensor> MaterialField::parameter_inputs() const {
    return {params_.hash_table, params_.w1, params_.b1, params_.w2, params_.b2};
}

MaterialField::Outputs MaterialField::build(ad::Graph& g, const ParamNodes& p, std::span<const Vec3> unit_points) const {
    if (!params_.all_finite()) throw std::runtime_error("material field parameters are not finite");
    const std::size_t N = unit_points.size();
    const std::size_t H = static_cast<std::size_t>(config_.hidden_units);

    auto lookup = encoding_.lookup(unit_points);
    if (lookup.clamped) {
        clamped_->fetch_add(lookup.clamped);
        spdlog::debug("clamped {} field queries to the unit cube", lookup.clamped);
    }
    auto features = g.interpolate(p.hash_table, static_cast<std::size_t>(config_.encoding.levels), 8,
                                  std::move(lookup.rows), std::move(lookup.weights));
    auto hidden = g.relu(g.add(g.matmul(features, p.w1), g.broadcast(p.b1, {N, H})));
    auto logits = g.add(g.matmul(hidden, p.w2), g.broadcast(p.b2, {N, kOutputs}));

    constexpr std::array<std::size_t, 3> rgb{0, 1, 2};
    constexpr std::array<std::size_t, 1> rough_col{3};
    constexpr std::array<std::size_t, 1> metal_col{4};

    Outputs out{};
    out.albedo = g.sigmoid(g.columns(logits, rgb));
    out.roughness = g.offset(g.scale(g.sigmoid(g.columns(logits, rough_col)), 1.0 - config_.roughness_min),
                             config_.roughness_min);
    out.metallic = g.sigmoid(g.columns(logits, metal_col));
    out.specular = specular_node(g, out.albedo, out.metallic);
    return out;
}

ad::NodeId specular_node(ad::Graph& g, ad::NodeId albedo, ad::NodeId metallic) {
    const auto& shape = g.shape(albedo);
    auto m3 = g.broadcast(metallic, shape);
    auto one_minus_m = g.offset(g.scale(m3, -1.0), 1.0);
    return g.add(g.mul(m3, albedo), g.scale(one_minus_m, 0.04));
}

std::vector<double> MaterialField::encode(const Vec3& unit_point) const {
    ad::Graph g;
    auto table = g.input(params_.hash_table.shape);
    auto lookup = encoding_.lookup(std::span<const Vec3>(&unit_point, 1));
    if (lookup.clamped) clamped_->fetch_add(lookup.clamped);
    auto f = g.interpolate(table, static_cast<std::size_t>(config_.encoding.levels), 8, std::move(lookup.rows),
                           std::move(lookup.weights));
    std::array<ad::Tensor, 1> in{params_.hash_table};
    g.forward(in);
    return g.value(f).data;
}

std::vector<MaterialSample> MaterialField::evaluate(std::span<const Vec3> unit_points) const {
    std::vector<MaterialSample> out(unit_points.size());
    if (unit_points.empty()) return out;
    ad::Graph g;
    auto p = declare_parameters(g);
    auto o = build(g, p, unit_points);
    g.forward(parameter_inputs());
    const auto &kd = g.value(o.albedo), &r = g.value(o.roughness), &m = g.value(o.metallic), &ks = g.value(o.specular);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].albedo = Vec3(kd[3 * i], kd[3 * i + 1], kd[3 * i + 2]);
        out[i].roughness = r[i];
        out[i].metallic = m[i];
        out[i].specular = Vec3(ks[3 * i], ks[3 * i + 1], ks[3 * i + 2]);
    }
    return out;
}

MaterialSample MaterialField::eval_material(const Vec3& unit_point) const {
    return evaluate(std::span<const Vec3>(&unit_point, 1)).front();
}

ad::NodeId albedo_smoothness(ad::Graph& g, const AlbedoBuilder& albedo, std::span<const Vec3> unit_points, double delta,
                             Rng& rng, const Vec3& axis_mask) {
    if (unit_points.empty()) return g.constant(ad::Tensor::scalar(0.0));
    std::vector<Vec3> jittered(unit_points.begin(), unit_points.end());
    for (auto& p : jittered)
        for (int a = 0; a < 3; ++a) {
            double u = uniform(rng, -1.0, 1.0);
            if (axis_mask[a] != 0.0) p[a] += delta * u;
        }
    auto base = albedo(g, unit_points);
    auto moved = albedo(g, jittered);
    auto l1 = g.sum(g.abs(g.sub(base, moved)));
    return g.scale(l1, 1.0 / static_cast<double>(unit_points.size()));
}

std::string field_config_to_json(const FieldConfig& c) {
    nlohmann::json j{
        {"encoding",
         {{"levels", c.encoding.levels},
          {"log2_table_size", c.encoding.log2_table_size},
          {"features", c.encoding.features},
          {"base_resolution", c.encoding.base_resolution},
          {"max_resolution", c.encoding.max_resolution}}},
        {"hidden_units", c.hidden_units},
        {"roughness_min", c.roughness_min},
        {"init_feature_scale", c.init_feature_scale},
        {"init_albedo", c.init_albedo},
        {"init_roughness", c.init_roughness},
        {"init_metallic", c.init_metallic},
    };
    return j.dump();
}

FieldConfig field_config_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    FieldConfig c;
    const auto& e = j.at("encoding");
    c.encoding.levels = e.at("levels");
    c.encoding.log2_table_size = e.at("log2_table_size");
    c.encoding.features = e.at("features");
    c.encoding.base_resolution = e.at("base_resolution");
    c.encoding.max_resolution = e.at("max_resolution");
    c.hidden_units = j.at("hidden_units");
    c.roughness_min = j.at("roughness_min");
    c.init_feature_scale = j.at("init_feature_scale");
    c.init_albedo = j.at("init_albedo");
    c.init_roughness = j.at("init_roughness");
    c.init_metallic = j.at("init_metallic");
    return c;
}

namespace {

constexpr char kMagic[4] = {'D', 'S', 'D', 'F'};

template <typename T>
void put_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const char* what) {
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T)))
        throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MaterialField& field) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write checkpoint " + path.string());
    os.write(kMagic, 4);
    put_le<std::uint32_t>(os, kCheckpointVersion);
    auto cfg = field_config_to_json(field.config());
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

    auto tensors = field.parameters().tensors();
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        std::string name = FieldParameters::kNames[i];
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors[i]->shape.size()));
        for (auto d : tensors[i]->shape) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    }
    for (const auto* t : tensors)
        for (double v : t->data) put_le<float>(os, static_cast<float>(v));
    if (!os) throw CheckpointError("failed writing checkpoint " + path.string());
}

MaterialField load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot read checkpoint " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("bad checkpoint magic in " + path.string());
    auto version = get_le<std::uint32_t>(is, "version");
    if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    auto cfg_len = get_le<std::uint32_t>(is, "config length");
    std::string cfg(cfg_len, '\0');
    if (!is.read(cfg.data(), cfg_len)) throw CheckpointError("truncated checkpoint config");
    FieldConfig config;
    try {
        config = field_config_from_json(cfg);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
    }

    FieldParameters params;
    auto tensors = params.tensors();
    auto count = get_le<std::uint32_t>(is, "tensor count");
    if (count != tensors.size()) throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, expected 5");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto name_len = get_le<std::uint32_t>(is, "tensor name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw CheckpointError("truncated tensor name");
        if (name != FieldParameters::kNames[i])
            throw CheckpointError("tensor " + std::to_string(i) + " is '" + name + "', expected '" + FieldParameters::kNames[i] + "'");
        auto rank = get_le<std::uint32_t>(is, "tensor rank");
        ad::Shape shape(rank);
        for (auto& d : shape) d = get_le<std::uint32_t>(is, "tensor dim");
        *tensors[i] = ad::Tensor::zeros(shape);
    }
    for (auto* t : tensors)
        for (auto& v : t->data) {
            float f = get_le<float>(is, "tensor payload");
            if (!std::isfinite(f)) throw CheckpointError("checkpoint contains non-finite parameter values");
            v = f;
        }
    try {
        return MaterialField(config, std::move(params));
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(e.what());
    }
}

}  // namespace dsdtex

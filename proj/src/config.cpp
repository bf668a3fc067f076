#include "dsdtex/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace dsdtex {

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_keys(const YAML::Node& node, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!node.IsMap()) throw ConfigError(path.empty() ? "<root>" : path, "expected a mapping");
    for (const auto& kv : node) {
        auto key = kv.first.as<std::string>();
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(join(path, key), "unknown key");
    }
}

template <typename T>
T convert(const YAML::Node& n, const std::string& field, const char* type) {
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(field, std::string("expected ") + type);
    }
}

template <typename T>
void read(const YAML::Node& map, const std::string& path, const char* key, T& out);

template <>
void read(const YAML::Node& map, const std::string& path, const char* key, double& out) {
    if (auto n = map[key]) out = convert<double>(n, join(path, key), "a number");
}
template <>
void read(const YAML::Node& map, const std::string& path, const char* key, int& out) {
    if (auto n = map[key]) out = convert<int>(n, join(path, key), "an integer");
}
template <>
void read(const YAML::Node& map, const std::string& path, const char* key, std::int64_t& out) {
    if (auto n = map[key]) out = convert<std::int64_t>(n, join(path, key), "an integer");
}
template <>
void read(const YAML::Node& map, const std::string& path, const char* key, std::uint64_t& out) {
    if (auto n = map[key]) out = convert<std::uint64_t>(n, join(path, key), "a non-negative integer");
}
template <>
void read(const YAML::Node& map, const std::string& path, const char* key, bool& out) {
    if (auto n = map[key]) out = convert<bool>(n, join(path, key), "a boolean");
}
template <>
void read(const YAML::Node& map, const std::string& path, const char* key, std::string& out) {
    if (auto n = map[key]) {
        if (n.IsNull()) {
            out.clear();
            return;
        }
        if (!n.IsScalar()) throw ConfigError(join(path, key), "expected a string");
        out = n.as<std::string>();
    }
}
template <>
void read(const YAML::Node& map, const std::string& path, const char* key, Rgb& out) {
    if (auto n = map[key]) {
        if (!n.IsSequence() || n.size() != 3) throw ConfigError(join(path, key), "expected a list of 3 numbers");
        for (std::size_t i = 0; i < 3; ++i) out[i] = convert<double>(n[i], join(path, key), "a list of 3 numbers");
    }
}
template <>
void read(const YAML::Node& map, const std::string& path, const char* key, Interval& out) {
    if (auto n = map[key]) {
        if (!n.IsSequence() || n.size() != 2) throw ConfigError(join(path, key), "expected [lo, hi]");
        out.lo = convert<double>(n[0], join(path, key), "[lo, hi]");
        out.hi = convert<double>(n[1], join(path, key), "[lo, hi]");
    }
}
template <>
void read(const YAML::Node& map, const std::string& path, const char* key, std::vector<std::string>& out) {
    if (auto n = map[key]) {
        if (!n.IsSequence()) throw ConfigError(join(path, key), "expected a list of strings");
        out.clear();
        for (const auto& e : n) out.push_back(convert<std::string>(e, join(path, key), "a list of strings"));
    }
}

template <typename E>
void read_enum(const YAML::Node& map, const std::string& path, const char* key, E& out,
               std::initializer_list<std::pair<const char*, E>> names) {
    auto n = map[key];
    if (!n) return;
    auto s = convert<std::string>(n, join(path, key), "a string");
    std::string options;
    for (const auto& [name, value] : names) {
        if (s == name) {
            out = value;
            return;
        }
        options += options.empty() ? name : std::string(" | ") + name;
    }
    throw ConfigError(join(path, key), "expected one of " + options);
}

template <typename E>
const char* enum_name(E v, std::initializer_list<std::pair<const char*, E>> names) {
    for (const auto& [name, value] : names)
        if (value == v) return name;
    return "?";
}

const std::initializer_list<std::pair<const char*, BackendKind>> kBackends{{"analytic", BackendKind::Analytic},
                                                                          {"remote", BackendKind::Remote}};
const std::initializer_list<std::pair<const char*, GuidanceMode>> kModes{{"dsd", GuidanceMode::Dsd},
                                                                        {"sds", GuidanceMode::Sds}};
const std::initializer_list<std::pair<const char*, NegativeView>> kNegativeViews{{"previous", NegativeView::Previous},
                                                                                {"current", NegativeView::Current}};
const std::initializer_list<std::pair<const char*, WeightMode>> kWeights{{"constant", WeightMode::Constant},
                                                                        {"one_minus_alpha", WeightMode::OneMinusAlpha}};
const std::initializer_list<std::pair<const char*, ScheduleFamily>> kFamilies{
    {"scaled_linear", ScheduleFamily::ScaledLinear}, {"linear", ScheduleFamily::Linear}, {"cosine", ScheduleFamily::Cosine}};
const std::initializer_list<std::pair<const char*, bool>> kLatents{{"linear", false}, {"srgb", true}};

template <typename Cam>
void read_camera(const YAML::Node& node, const std::string& path, Cam& cam) {
    if (!node) return;
    check_keys(node, path, {"radius", "elevation", "azimuth", "fov_y"});
    read(node, path, "radius", cam.radius);
    read(node, path, "elevation", cam.elevation);
    read(node, path, "azimuth", cam.azimuth);
    read(node, path, "fov_y", cam.fov_y);
}

void apply_override(YAML::Node& root, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
    std::string path = assignment.substr(0, eq);
    YAML::Node value;
    try {
        value = YAML::Load(assignment.substr(eq + 1));
    } catch (const YAML::Exception& e) {
        throw ConfigError(path, std::string("cannot parse override value: ") + e.what());
    }
    std::vector<std::string> keys;
    std::stringstream ss(path);
    for (std::string k; std::getline(ss, k, '.');) keys.push_back(k);
    if (!root.IsMap()) root = YAML::Node(YAML::NodeType::Map);
    YAML::Node cur = root;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!cur[keys[i]] || !cur[keys[i]].IsMap()) cur[keys[i]] = YAML::Node(YAML::NodeType::Map);
        YAML::Node next = cur[keys[i]];
        cur.reset(next);
    }
    cur[keys.back()] = value;
}

RunConfig from_yaml(const YAML::Node& root) {
    RunConfig c;
    if (!root || root.IsNull()) return c;
    check_keys(root, "", {"schema_version", "mesh", "output_dir", "environment", "background", "guidance", "train", "field",
                          "shading", "bake", "turntable"});
    read(root, "", "schema_version", c.schema_version);
    if (c.schema_version != kConfigSchemaVersion)
        throw ConfigError("schema_version", "unsupported version " + std::to_string(c.schema_version) + " (expected " +
                                                std::to_string(kConfigSchemaVersion) + ")");
    read(root, "", "mesh", c.mesh);
    read(root, "", "output_dir", c.output_dir);
    read(root, "", "environment", c.environment);
    read(root, "", "background", c.background);

    if (auto g = root["guidance"]) {
        const std::string p = "guidance";
        check_keys(g, p, {"backend", "prompt", "negative_prompts", "mode", "lambda", "omega", "t_min", "t_max", "weighting",
                          "negative_view", "depth_conditioning", "latent", "schedule", "remote", "analytic"});
        auto& gc = c.guidance;
        read_enum(g, p, "backend", c.backend, kBackends);
        read(g, p, "prompt", gc.prompt);
        read(g, p, "negative_prompts", gc.negative_prompts);
        read_enum(g, p, "mode", gc.mode, kModes);
        read(g, p, "lambda", gc.lambda);
        read(g, p, "omega", gc.omega);
        read(g, p, "t_min", gc.t_min);
        read(g, p, "t_max", gc.t_max);
        read_enum(g, p, "weighting", gc.weight, kWeights);
        read_enum(g, p, "negative_view", gc.negative_view, kNegativeViews);
        read(g, p, "depth_conditioning", gc.depth_conditioning);
        read_enum(g, p, "latent", gc.srgb_latent, kLatents);
        if (auto s = g["schedule"]) {
            const std::string sp = "guidance.schedule";
            check_keys(s, sp, {"family", "steps", "beta_start", "beta_end"});
            read_enum(s, sp, "family", gc.schedule.family, kFamilies);
            read(s, sp, "steps", gc.schedule.steps);
            read(s, sp, "beta_start", gc.schedule.beta_start);
            read(s, sp, "beta_end", gc.schedule.beta_end);
        }
        if (auto r = g["remote"]) {
            const std::string rp = "guidance.remote";
            check_keys(r, rp, {"endpoint", "timeout_seconds"});
            read(r, rp, "endpoint", c.remote.endpoint);
            read(r, rp, "timeout_seconds", c.remote.timeout_seconds);
        }
        if (auto a = g["analytic"]) {
            const std::string ap = "guidance.analytic";
            check_keys(a, ap, {"target", "target_variance", "negative", "negative_variance", "unconditional",
                               "unconditional_variance"});
            read(a, ap, "target", c.analytic.target);
            read(a, ap, "target_variance", c.analytic.target_variance);
            if (a["negative"] && !a["negative"].IsNull()) {
                Rgb neg{};
                read(a, ap, "negative", neg);
                c.analytic.negative = neg;
            }
            read(a, ap, "negative_variance", c.analytic.negative_variance);
            read(a, ap, "unconditional", c.analytic.unconditional);
            read(a, ap, "unconditional_variance", c.analytic.unconditional_variance);
        }
    }
    c.remote.depth_conditioning = c.guidance.depth_conditioning;

    if (auto t = root["train"]) {
        const std::string p = "train";
        check_keys(t, p, {"iterations", "learning_rate", "beta1", "beta2", "eps", "weight_decay", "zoom_period",
                          "albedo_weight", "albedo_delta", "grad_clip", "resolution", "seed", "checkpoint_every",
                          "preview_every", "body_camera", "face_camera"});
        auto& tc = c.train;
        read(t, p, "iterations", tc.iterations);
        read(t, p, "learning_rate", tc.optimizer.learning_rate);
        read(t, p, "beta1", tc.optimizer.beta1);
        read(t, p, "beta2", tc.optimizer.beta2);
        read(t, p, "eps", tc.optimizer.eps);
        read(t, p, "weight_decay", tc.optimizer.weight_decay);
        read(t, p, "zoom_period", tc.zoom_period);
        read(t, p, "albedo_weight", tc.albedo_weight);
        read(t, p, "albedo_delta", tc.albedo_delta);
        read(t, p, "grad_clip", tc.grad_clip);
        read(t, p, "resolution", tc.resolution);
        read(t, p, "seed", tc.seed);
        read(t, p, "checkpoint_every", tc.checkpoint_every);
        read(t, p, "preview_every", tc.preview_every);
        read_camera(t["body_camera"], "train.body_camera", tc.body_camera);
        read_camera(t["face_camera"], "train.face_camera", tc.face_camera);
    }

    if (auto f = root["field"]) {
        const std::string p = "field";
        check_keys(f, p, {"levels", "log2_table_size", "features", "base_resolution", "max_resolution", "hidden_units",
                          "roughness_min", "init_feature_scale", "init_albedo", "init_roughness", "init_metallic"});
        auto& fc = c.field;
        read(f, p, "levels", fc.encoding.levels);
        read(f, p, "log2_table_size", fc.encoding.log2_table_size);
        read(f, p, "features", fc.encoding.features);
        read(f, p, "base_resolution", fc.encoding.base_resolution);
        read(f, p, "max_resolution", fc.encoding.max_resolution);
        read(f, p, "hidden_units", fc.hidden_units);
        read(f, p, "roughness_min", fc.roughness_min);
        read(f, p, "init_feature_scale", fc.init_feature_scale);
        read(f, p, "init_albedo", fc.init_albedo);
        read(f, p, "init_roughness", fc.init_roughness);
        read(f, p, "init_metallic", fc.init_metallic);
    }
    c.shading.roughness_min = c.field.roughness_min;

    if (auto s = root["shading"]) {
        const std::string p = "shading";
        check_keys(s, p, {"face_size", "mip_levels", "lut_size", "prefilter_samples", "lut_samples"});
        read(s, p, "face_size", c.shading.face_size);
        read(s, p, "mip_levels", c.shading.mip_levels);
        read(s, p, "lut_size", c.shading.lut_size);
        read(s, p, "prefilter_samples", c.shading.prefilter_samples);
        read(s, p, "lut_samples", c.shading.lut_samples);
    }
    if (auto b = root["bake"]) {
        check_keys(b, "bake", {"resolution", "vertex_fallback"});
        read(b, "bake", "resolution", c.bake.resolution);
        read(b, "bake", "vertex_fallback", c.bake.vertex_fallback);
    }
    if (auto t = root["turntable"]) {
        check_keys(t, "turntable", {"poses", "resolution"});
        read(t, "turntable", "poses", c.turntable.poses);
        read(t, "turntable", "resolution", c.turntable.resolution);
    }
    return c;
}

void emit_rgb(YAML::Emitter& out, const char* key, const Rgb& v) {
    out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << v[0] << v[1] << v[2] << YAML::EndSeq;
}

void emit_interval(YAML::Emitter& out, const char* key, const Interval& v) {
    out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << v.lo << v.hi << YAML::EndSeq;
}

template <typename Cam>
void emit_camera(YAML::Emitter& out, const char* key, const Cam& cam) {
    out << YAML::Key << key << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "radius" << YAML::Value << cam.radius;
    emit_interval(out, "elevation", cam.elevation);
    emit_interval(out, "azimuth", cam.azimuth);
    out << YAML::Key << "fov_y" << YAML::Value << cam.fov_y;
    out << YAML::EndMap;
}

}  // namespace

RunConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ConfigError("<file>", std::string("invalid YAML: ") + e.what());
    }
    if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    for (const auto& o : overrides) apply_override(root, o);
    return from_yaml(root);
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

std::string config_to_yaml(const RunConfig& c) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "schema_version" << YAML::Value << c.schema_version;
    out << YAML::Key << "mesh" << YAML::Value << YAML::DoubleQuoted << c.mesh;
    out << YAML::Key << "output_dir" << YAML::Value << YAML::DoubleQuoted << c.output_dir;
    out << YAML::Key << "environment" << YAML::Value << YAML::DoubleQuoted << c.environment;
    emit_rgb(out, "background", c.background);

    const auto& g = c.guidance;
    out << YAML::Key << "guidance" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "backend" << YAML::Value << enum_name(c.backend, kBackends);
    out << YAML::Key << "prompt" << YAML::Value << YAML::DoubleQuoted << g.prompt;
    out << YAML::Key << "negative_prompts" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& p : g.negative_prompts) out << YAML::DoubleQuoted << p;
    out << YAML::EndSeq;
    out << YAML::Key << "mode" << YAML::Value << enum_name(g.mode, kModes);
    out << YAML::Key << "lambda" << YAML::Value << g.lambda;
    out << YAML::Key << "omega" << YAML::Value << g.omega;
    out << YAML::Key << "t_min" << YAML::Value << g.t_min;
    out << YAML::Key << "t_max" << YAML::Value << g.t_max;
    out << YAML::Key << "weighting" << YAML::Value << enum_name(g.weight, kWeights);
    out << YAML::Key << "negative_view" << YAML::Value << enum_name(g.negative_view, kNegativeViews);
    out << YAML::Key << "depth_conditioning" << YAML::Value << g.depth_conditioning;
    out << YAML::Key << "latent" << YAML::Value << enum_name(g.srgb_latent, kLatents);
    out << YAML::Key << "schedule" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "family" << YAML::Value << enum_name(g.schedule.family, kFamilies);
    out << YAML::Key << "steps" << YAML::Value << g.schedule.steps;
    out << YAML::Key << "beta_start" << YAML::Value << g.schedule.beta_start;
    out << YAML::Key << "beta_end" << YAML::Value << g.schedule.beta_end;
    out << YAML::EndMap;
    out << YAML::Key << "remote" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "endpoint" << YAML::Value << YAML::DoubleQuoted << c.remote.endpoint;
    out << YAML::Key << "timeout_seconds" << YAML::Value << c.remote.timeout_seconds;
    out << YAML::EndMap;
    out << YAML::Key << "analytic" << YAML::Value << YAML::BeginMap;
    emit_rgb(out, "target", c.analytic.target);
    out << YAML::Key << "target_variance" << YAML::Value << c.analytic.target_variance;
    if (c.analytic.negative) emit_rgb(out, "negative", *c.analytic.negative);
    out << YAML::Key << "negative_variance" << YAML::Value << c.analytic.negative_variance;
    emit_rgb(out, "unconditional", c.analytic.unconditional);
    out << YAML::Key << "unconditional_variance" << YAML::Value << c.analytic.unconditional_variance;
    out << YAML::EndMap;
    out << YAML::EndMap;

    const auto& t = c.train;
    out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "iterations" << YAML::Value << t.iterations;
    out << YAML::Key << "learning_rate" << YAML::Value << t.optimizer.learning_rate;
    out << YAML::Key << "beta1" << YAML::Value << t.optimizer.beta1;
    out << YAML::Key << "beta2" << YAML::Value << t.optimizer.beta2;
    out << YAML::Key << "eps" << YAML::Value << t.optimizer.eps;
    out << YAML::Key << "weight_decay" << YAML::Value << t.optimizer.weight_decay;
    out << YAML::Key << "zoom_period" << YAML::Value << t.zoom_period;
    out << YAML::Key << "albedo_weight" << YAML::Value << t.albedo_weight;
    out << YAML::Key << "albedo_delta" << YAML::Value << t.albedo_delta;
    out << YAML::Key << "grad_clip" << YAML::Value << t.grad_clip;
    out << YAML::Key << "resolution" << YAML::Value << t.resolution;
    out << YAML::Key << "seed" << YAML::Value << t.seed;
    out << YAML::Key << "checkpoint_every" << YAML::Value << t.checkpoint_every;
    out << YAML::Key << "preview_every" << YAML::Value << t.preview_every;
    emit_camera(out, "body_camera", t.body_camera);
    emit_camera(out, "face_camera", t.face_camera);
    out << YAML::EndMap;

    const auto& f = c.field;
    out << YAML::Key << "field" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "levels" << YAML::Value << f.encoding.levels;
    out << YAML::Key << "log2_table_size" << YAML::Value << f.encoding.log2_table_size;
    out << YAML::Key << "features" << YAML::Value << f.encoding.features;
    out << YAML::Key << "base_resolution" << YAML::Value << f.encoding.base_resolution;
    out << YAML::Key << "max_resolution" << YAML::Value << f.encoding.max_resolution;
    out << YAML::Key << "hidden_units" << YAML::Value << f.hidden_units;
    out << YAML::Key << "roughness_min" << YAML::Value << f.roughness_min;
    out << YAML::Key << "init_feature_scale" << YAML::Value << f.init_feature_scale;
    out << YAML::Key << "init_albedo" << YAML::Value << f.init_albedo;
    out << YAML::Key << "init_roughness" << YAML::Value << f.init_roughness;
    out << YAML::Key << "init_metallic" << YAML::Value << f.init_metallic;
    out << YAML::EndMap;

    const auto& s = c.shading;
    out << YAML::Key << "shading" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "face_size" << YAML::Value << s.face_size;
    out << YAML::Key << "mip_levels" << YAML::Value << s.mip_levels;
    out << YAML::Key << "lut_size" << YAML::Value << s.lut_size;
    out << YAML::Key << "prefilter_samples" << YAML::Value << s.prefilter_samples;
    out << YAML::Key << "lut_samples" << YAML::Value << s.lut_samples;
    out << YAML::EndMap;

    out << YAML::Key << "bake" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "resolution" << YAML::Value << c.bake.resolution;
    out << YAML::Key << "vertex_fallback" << YAML::Value << c.bake.vertex_fallback;
    out << YAML::EndMap;
    out << YAML::Key << "turntable" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "poses" << YAML::Value << c.turntable.poses;
    out << YAML::Key << "resolution" << YAML::Value << c.turntable.resolution;
    out << YAML::EndMap;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

void validate_config(const RunConfig& c, bool check_files) {
    if (c.mesh.empty()) throw ConfigError("mesh", "a mesh path is required");
    if (check_files && !std::filesystem::exists(c.mesh)) throw ConfigError("mesh", "file not found: " + c.mesh);
    if (c.guidance.prompt.empty()) throw ConfigError("guidance.prompt", "prompt must be nonempty");
    if (c.output_dir.empty()) throw ConfigError("output_dir", "an output directory is required");
    if (check_files && !c.environment.empty() && !std::filesystem::is_directory(c.environment))
        throw ConfigError("environment", "cube map directory not found: " + c.environment);
    for (int i = 0; i < 3; ++i)
        if (!(c.background[i] >= 0.0)) throw ConfigError("background", "components must be >= 0");

    auto wrap = [](const char* field, auto&& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(field, e.what());
        }
    };
    wrap("guidance", [&] { c.guidance.validate(); });
    wrap("guidance.schedule", [&] { NoiseSchedule check(c.guidance.schedule); });
    wrap("train", [&] { c.train.validate(); });
    wrap("field", [&] { c.field.validate(); });
    wrap("shading", [&] { c.shading.validate(); });

    auto check_camera = [](const std::string& p, double radius, const Interval& el, const Interval& az, double fov) {
        if (!(radius > 0.0)) throw ConfigError(p + ".radius", "must be > 0");
        if (!el.valid()) throw ConfigError(p + ".elevation", "lo must not exceed hi");
        if (!az.valid()) throw ConfigError(p + ".azimuth", "lo must not exceed hi");
        if (!(fov > 0.0 && fov < 3.14159)) throw ConfigError(p + ".fov_y", "must lie in (0, pi)");
    };
    const auto& b = c.train.body_camera;
    const auto& f = c.train.face_camera;
    check_camera("train.body_camera", b.radius, b.elevation, b.azimuth, b.fov_y);
    check_camera("train.face_camera", f.radius, f.elevation, f.azimuth, f.fov_y);

    for (auto [field, v] : {std::pair{"guidance.analytic.target_variance", c.analytic.target_variance},
                            std::pair{"guidance.analytic.negative_variance", c.analytic.negative_variance},
                            std::pair{"guidance.analytic.unconditional_variance", c.analytic.unconditional_variance}})
        if (!(v >= 0.0)) throw ConfigError(field, "must be >= 0");
    if (c.backend == BackendKind::Remote) {
        if (c.remote.endpoint.empty()) throw ConfigError("guidance.remote.endpoint", "required for the remote backend");
        if (!(c.remote.timeout_seconds > 0.0)) throw ConfigError("guidance.remote.timeout_seconds", "must be > 0");
    }
    if (c.bake.resolution < 1) throw ConfigError("bake.resolution", "must be >= 1");
    if (c.turntable.poses < 1) throw ConfigError("turntable.poses", "must be >= 1");
    if (c.turntable.resolution < 1) throw ConfigError("turntable.resolution", "must be >= 1");
}

}  // namespace dsdtex

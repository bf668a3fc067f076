#include "dsdtex/shading.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dsdtex/image_io.hpp"

namespace dsdtex {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kMinCos = 1e-4;

double radical_inverse(std::uint32_t bits) {
    bits = (bits << 16u) | (bits >> 16u);
    bits = ((bits & 0x55555555u) << 1u) | ((bits & 0xAAAAAAAAu) >> 1u);
    bits = ((bits & 0x33333333u) << 2u) | ((bits & 0xCCCCCCCCu) >> 2u);
    bits = ((bits & 0x0F0F0F0Fu) << 4u) | ((bits & 0xF0F0F0F0u) >> 4u);
    bits = ((bits & 0x00FF00FFu) << 8u) | ((bits & 0xFF00FF00u) >> 8u);
    return static_cast<double>(bits) * 0x1.0p-32;
}

// GGX half vector around +z for Hammersley point i of n.
Vec3 sample_ggx_half(int i, int n, double alpha) {
    double u1 = (i + 0.5) / n;
    double u2 = radical_inverse(static_cast<std::uint32_t>(i));
    double a2 = alpha * alpha;
    double cos_t = std::sqrt((1.0 - u1) / (1.0 + (a2 - 1.0) * u1));
    double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
    double phi = 2.0 * kPi * u2;
    return {sin_t * std::cos(phi), sin_t * std::sin(phi), cos_t};
}

void tangent_frame(const Vec3& n, Vec3& t, Vec3& b) {
    Vec3 up = std::abs(n.z()) < 0.999 ? Vec3::UnitZ() : Vec3::UnitX();
    t = up.cross(n).normalized();
    b = n.cross(t);
}

double area_element(double x, double y) { return std::atan2(x * y, std::sqrt(x * x + y * y + 1.0)); }

double texel_solid_angle(int x, int y, int size) {
    double inv = 1.0 / size;
    double x0 = 2.0 * x * inv - 1.0, x1 = 2.0 * (x + 1) * inv - 1.0;
    double y0 = 2.0 * y * inv - 1.0, y1 = 2.0 * (y + 1) * inv - 1.0;
    return area_element(x0, y0) - area_element(x0, y1) - area_element(x1, y0) + area_element(x1, y1);
}

CubeMap resample(const CubeMap& src, int size) {
    CubeMap cur = src;
    while (cur.size >= 2 * size) cur = cur.downsampled();
    if (cur.size == size) return cur;
    CubeMap out = CubeMap::constant(size, Vec3::Zero());
    for (int f = 0; f < 6; ++f)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) out.texel(f, x, y) = cur.sample(out.direction(f, x, y));
    return out;
}

}  // namespace

CubeMap CubeMap::constant(int size, const Vec3& radiance) {
    if (size < 1) throw std::invalid_argument("cube map size must be >= 1");
    CubeMap c;
    c.size = size;
    for (auto& f : c.faces) f.assign(static_cast<std::size_t>(size) * size, radiance);
    return c;
}

Vec3 CubeMap::direction(int face, int x, int y) const {
    double sc = 2.0 * (x + 0.5) / size - 1.0;
    double tc = 2.0 * (y + 0.5) / size - 1.0;
    Vec3 d;
    switch (face) {
    case 0: d = {1.0, -tc, -sc}; break;
    case 1: d = {-1.0, -tc, sc}; break;
    case 2: d = {sc, 1.0, tc}; break;
    case 3: d = {sc, -1.0, -tc}; break;
    case 4: d = {sc, -tc, 1.0}; break;
    default: d = {-sc, -tc, -1.0}; break;
    }
    return d.normalized();
}

Vec3 CubeMap::sample(const Vec3& dir) const {
    double ax = std::abs(dir.x()), ay = std::abs(dir.y()), az = std::abs(dir.z());
    int face;
    double sc, tc;
    if (ax >= ay && ax >= az) {
        face = dir.x() >= 0 ? 0 : 1;
        sc = (dir.x() >= 0 ? -dir.z() : dir.z()) / ax;
        tc = -dir.y() / ax;
    } else if (ay >= az) {
        face = dir.y() >= 0 ? 2 : 3;
        sc = dir.x() / ay;
        tc = (dir.y() >= 0 ? dir.z() : -dir.z()) / ay;
    } else {
        face = dir.z() >= 0 ? 4 : 5;
        sc = (dir.z() >= 0 ? dir.x() : -dir.x()) / az;
        tc = -dir.y() / az;
    }
    double fx = std::clamp((sc + 1.0) * 0.5 * size - 0.5, 0.0, size - 1.0);
    double fy = std::clamp((tc + 1.0) * 0.5 * size - 0.5, 0.0, size - 1.0);
    int x0 = std::min(static_cast<int>(fx), size - 1), y0 = std::min(static_cast<int>(fy), size - 1);
    int x1 = std::min(x0 + 1, size - 1), y1 = std::min(y0 + 1, size - 1);
    double tx = fx - x0, ty = fy - y0;
    return (1 - ty) * ((1 - tx) * texel(face, x0, y0) + tx * texel(face, x1, y0)) +
           ty * ((1 - tx) * texel(face, x0, y1) + tx * texel(face, x1, y1));
}

CubeMap CubeMap::downsampled() const {
    if (size < 2 || size % 2) throw std::invalid_argument("cube map downsample needs an even face size");
    CubeMap out = constant(size / 2, Vec3::Zero());
    for (int f = 0; f < 6; ++f)
        for (int y = 0; y < out.size; ++y)
            for (int x = 0; x < out.size; ++x)
                out.texel(f, x, y) = 0.25 * (texel(f, 2 * x, 2 * y) + texel(f, 2 * x + 1, 2 * y) +
                                             texel(f, 2 * x, 2 * y + 1) + texel(f, 2 * x + 1, 2 * y + 1));
    return out;
}

CubeMap CubeMap::scaled(double s) const {
    CubeMap out = *this;
    for (auto& f : out.faces)
        for (auto& t : f) t *= s;
    return out;
}

CubeMap load_cube_map(const std::filesystem::path& dir) {
    CubeMap cube;
    for (int f = 0; f < 6; ++f) {
        auto hdr = dir / (std::string(kCubeFaceNames[f]) + ".hdr");
        auto png = dir / (std::string(kCubeFaceNames[f]) + ".png");
        Image img;
        bool from_png = false;
        if (std::filesystem::exists(hdr)) {
            img = read_hdr(hdr);
        } else if (std::filesystem::exists(png)) {
            img = read_png(png);
            from_png = true;
        } else {
            throw ImageError("cube map face missing: " + hdr.string() + " or " + png.string());
        }
        if (img.width != img.height) throw ImageError(std::string("cube map face ") + kCubeFaceNames[f] + " is not square");
        if (f == 0) {
            cube = CubeMap::constant(img.width, Vec3::Zero());
        } else if (img.width != cube.size) {
            throw ImageError("cube map faces differ in size");
        }
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                Vec3 c;
                for (int k = 0; k < 3; ++k) {
                    double v = img.at(x, y, img.channels >= 3 ? k : 0);
                    c[k] = from_png ? srgb_to_linear(v) : std::max(0.0, v);
                }
                cube.texel(f, x, y) = c;
            }
    }
    return cube;
}

void ShadingConfig::validate() const {
    if (face_size < 1) throw std::invalid_argument("shading.face_size must be >= 1");
    if (mip_levels < 2) throw std::invalid_argument("shading.mip_levels must be >= 2");
    if ((face_size >> (mip_levels - 1)) < 1) throw std::invalid_argument("shading.mip_levels too deep for face_size");
    if (lut_size < 2) throw std::invalid_argument("shading.lut_size must be >= 2");
    if (prefilter_samples < 1 || lut_samples < 1) throw std::invalid_argument("shading sample counts must be >= 1");
    if (!(roughness_min > 0.0 && roughness_min < 1.0)) throw std::invalid_argument("shading.roughness_min must be in (0, 1)");
}

double EnvironmentLight::roughness_of_mip(int k) const {
    return roughness_min + (1.0 - roughness_min) * k / static_cast<double>(mips.size() - 1);
}

double EnvironmentLight::lut_roughness(int col) const {
    return roughness_min + (1.0 - roughness_min) * col / static_cast<double>(lut_size - 1);
}

double EnvironmentLight::lut_cos_view(int row) const { return row / static_cast<double>(lut_size - 1); }

double ggx_distribution(double n_dot_h, double alpha) {
    double a2 = alpha * alpha;
    double d = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    return a2 / (kPi * d * d);
}

Vec3 schlick_fresnel(double v_dot_h, const Vec3& f0) {
    double w = std::pow(1.0 - std::clamp(v_dot_h, 0.0, 1.0), 5.0);
    return f0 + (Vec3::Ones() - f0) * w;
}

double smith_g2(double n_dot_v, double n_dot_l, double alpha) {
    auto lambda = [alpha](double c) {
        c = std::max(c, kMinCos);
        double tan2 = (1.0 - c * c) / (c * c);
        return 0.5 * (-1.0 + std::sqrt(1.0 + alpha * alpha * tan2));
    };
    return 1.0 / (1.0 + lambda(n_dot_v) + lambda(n_dot_l));
}

Vec3 eval_diffuse(const Vec3& albedo) { return albedo / kPi; }

Vec3 eval_specular(const Vec3& n, const Vec3& v, const Vec3& l, double roughness, const Vec3& specular) {
    double alpha = roughness * roughness;
    Vec3 h = (v + l).normalized();
    double nl = std::max(n.dot(l), kMinCos);
    double nv = std::max(n.dot(v), kMinCos);
    double D = ggx_distribution(std::max(n.dot(h), 0.0), alpha);
    Vec3 F = schlick_fresnel(v.dot(h), specular);
    double G = smith_g2(nv, nl, alpha);
    return F * (D * G / (4.0 * nl * nv));
}

std::array<double, 2> integrate_brdf(double n_dot_v, double roughness, int samples) {
    double nv = std::max(n_dot_v, kMinCos);
    Vec3 v(std::sqrt(std::max(0.0, 1.0 - nv * nv)), 0.0, nv);
    double alpha = roughness * roughness;
    double scale = 0.0, bias = 0.0;
    for (int i = 0; i < samples; ++i) {
        Vec3 h = sample_ggx_half(i, samples, alpha);
        double vh = v.dot(h);
        Vec3 l = 2.0 * vh * h - v;
        double nl = l.z();
        if (nl <= 0.0 || vh <= 0.0) continue;
        double g_vis = smith_g2(nv, nl, alpha) * vh / (h.z() * nv);
        double fc = std::pow(1.0 - vh, 5.0);
        scale += (1.0 - fc) * g_vis;
        bias += fc * g_vis;
    }
    return {scale / samples, bias / samples};
}

EnvironmentLight prefilter(const CubeMap& environment, const ShadingConfig& config) {
    config.validate();
    EnvironmentLight env;
    env.roughness_min = config.roughness_min;
    env.radiance = resample(environment, config.face_size);

    std::vector<CubeMap> source{env.radiance};
    while (source.back().size > 1 && source.back().size % 2 == 0) source.push_back(source.back().downsampled());
    const int S = config.face_size;
    const double texel_omega = 4.0 * kPi / (6.0 * S * S);

    env.mips.resize(static_cast<std::size_t>(config.mip_levels));
    for (int k = 0; k < config.mip_levels; ++k) {
        const int size = S >> k;
        const double roughness = config.roughness_min + (1.0 - config.roughness_min) * k / (config.mip_levels - 1.0);
        const double alpha = roughness * roughness;
        const int n = config.prefilter_samples;

        std::vector<Vec3> halves(n);
        std::vector<int> lods(n);
        for (int i = 0; i < n; ++i) {
            halves[i] = sample_ggx_half(i, n, alpha);
            // pdf of L with N = V is D/4; pick the source level whose texel matches the sample footprint.
            double pdf = ggx_distribution(halves[i].z(), alpha) / 4.0;
            double lod = 0.5 * std::log2((1.0 / (n * pdf)) / texel_omega);
            lods[i] = std::clamp(static_cast<int>(std::lround(lod)), 0, static_cast<int>(source.size()) - 1);
        }

        CubeMap mip = CubeMap::constant(size, Vec3::Zero());
        for (int f = 0; f < 6; ++f)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    Vec3 nrm = mip.direction(f, x, y);
                    Vec3 t, b;
                    tangent_frame(nrm, t, b);
                    Vec3 acc = Vec3::Zero();
                    double wsum = 0.0;
                    for (int i = 0; i < n; ++i) {
                        const Vec3& hl = halves[i];
                        Vec3 h = hl.x() * t + hl.y() * b + hl.z() * nrm;
                        Vec3 l = 2.0 * nrm.dot(h) * h - nrm;
                        double nl = nrm.dot(l);
                        if (nl <= 0.0) continue;
                        acc += source[lods[i]].sample(l) * nl;
                        wsum += nl;
                    }
                    mip.texel(f, x, y) = wsum > 0.0 ? Vec3(acc / wsum) : env.radiance.sample(nrm);
                }
        env.mips[k] = std::move(mip);
    }

    // Cosine convolution over every source texel, normalized by the discrete cosine mass.
    const int deep = S >> (config.mip_levels - 1);
    env.irradiance = CubeMap::constant(deep, Vec3::Zero());
    std::vector<Vec3> dirs;
    std::vector<double> omegas;
    std::vector<Vec3> values;
    for (int f = 0; f < 6; ++f)
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                dirs.push_back(env.radiance.direction(f, x, y));
                omegas.push_back(texel_solid_angle(x, y, S));
                values.push_back(env.radiance.texel(f, x, y));
            }
    for (int f = 0; f < 6; ++f)
        for (int y = 0; y < deep; ++y)
            for (int x = 0; x < deep; ++x) {
                Vec3 nrm = env.irradiance.direction(f, x, y);
                Vec3 acc = Vec3::Zero();
                double wsum = 0.0;
                for (std::size_t i = 0; i < dirs.size(); ++i) {
                    double c = nrm.dot(dirs[i]);
                    if (c <= 0.0) continue;
                    acc += values[i] * (c * omegas[i]);
                    wsum += c * omegas[i];
                }
                env.irradiance.texel(f, x, y) = acc / wsum;
            }

    env.lut_size = config.lut_size;
    const auto M = static_cast<std::size_t>(config.lut_size);
    env.lut_scale.assign(M * M, 0.0);
    env.lut_bias.assign(M * M, 0.0);
    for (std::size_t row = 0; row < M; ++row)
        for (std::size_t col = 0; col < M; ++col) {
            auto sb = integrate_brdf(env.lut_cos_view(static_cast<int>(row)), env.lut_roughness(static_cast<int>(col)),
                                     config.lut_samples);
            env.lut_scale[row * M + col] = sb[0];
            env.lut_bias[row * M + col] = sb[1];
        }
    return env;
}

PixelLighting gather_lighting(const GBuffer& gbuffer, const EnvironmentLight& env, const Camera& camera) {
    PixelLighting out;
    const Vec3 eye = camera.position();
    for (std::size_t i = 0; i < gbuffer.pixels.size(); ++i)
        if (gbuffer.pixels[i].hit) out.pixel_index.push_back(i);
    const std::size_t N = out.pixel_index.size();
    const std::size_t K = env.mips.size();
    const auto M = static_cast<std::size_t>(env.lut_size);

    out.unit_points.resize(N);
    out.irradiance = ad::Tensor::zeros({N, 3});
    out.prefiltered = ad::Tensor::zeros({N, K, 3});
    out.lut_scale = ad::Tensor::zeros({N, M, 1});
    out.lut_bias = ad::Tensor::zeros({N, M, 1});

    for (std::size_t r = 0; r < N; ++r) {
        const auto& px = gbuffer.pixels[out.pixel_index[r]];
        out.unit_points[r] = to_unit_cube(px.position);
        const Vec3& n = px.normal;
        Vec3 v = (eye - px.position).normalized();
        double nv = std::max(n.dot(v), kMinCos);
        Vec3 refl = (2.0 * nv * n - v).normalized();

        Vec3 e = env.irradiance.sample(n);
        for (int c = 0; c < 3; ++c) out.irradiance[r * 3 + c] = e[c];
        for (std::size_t k = 0; k < K; ++k) {
            Vec3 p = env.mips[k].sample(refl);
            for (int c = 0; c < 3; ++c) out.prefiltered[(r * K + k) * 3 + c] = p[c];
        }
        double pos = std::clamp(nv, 0.0, 1.0) * static_cast<double>(M - 1);
        auto j = std::min(static_cast<std::size_t>(pos), M - 2);
        double f = pos - static_cast<double>(j);
        for (std::size_t col = 0; col < M; ++col) {
            out.lut_scale[r * M + col] = (1.0 - f) * env.lut_scale[j * M + col] + f * env.lut_scale[(j + 1) * M + col];
            out.lut_bias[r * M + col] = (1.0 - f) * env.lut_bias[j * M + col] + f * env.lut_bias[(j + 1) * M + col];
        }
    }
    return out;
}

ad::NodeId shade_graph(ad::Graph& g, const PixelLighting& lighting, const MaterialNodes& m, double roughness_min) {
    const std::size_t N = lighting.count();
    const ad::Shape rgb{N, 3};
    auto u = g.scale(g.offset(m.roughness, -roughness_min), 1.0 / (1.0 - roughness_min));
    auto prefiltered = g.lerp(g.constant(lighting.prefiltered), u);
    auto scale = g.broadcast(g.lerp(g.constant(lighting.lut_scale), u), rgb);
    auto bias = g.broadcast(g.lerp(g.constant(lighting.lut_bias), u), rgb);
    auto specular = g.mul(prefiltered, g.add(g.mul(m.specular, scale), bias));
    auto diffuse = g.mul(m.albedo, g.constant(lighting.irradiance));
    return g.add(diffuse, specular);
}

ShadedImage shade(const GBuffer& gbuffer, std::span<const MaterialSample> materials, const EnvironmentLight& env,
                  const Camera& camera, const Vec3& background) {
    auto lighting = gather_lighting(gbuffer, env, camera);
    const std::size_t N = lighting.count();
    if (materials.size() != N)
        throw std::invalid_argument("shade: " + std::to_string(materials.size()) + " material samples for " +
                                    std::to_string(N) + " hit pixels");
    ShadedImage img;
    img.width = gbuffer.width;
    img.height = gbuffer.height;
    img.radiance.assign(gbuffer.pixels.size(), background);
    img.alpha.assign(gbuffer.pixels.size(), 0);
    if (N == 0) return img;

    ad::Tensor kd = ad::Tensor::zeros({N, 3}), ks = ad::Tensor::zeros({N, 3}), rough = ad::Tensor::zeros({N, 1});
    for (std::size_t i = 0; i < N; ++i) {
        for (int c = 0; c < 3; ++c) {
            kd[i * 3 + c] = materials[i].albedo[c];
            ks[i * 3 + c] = materials[i].specular[c];
        }
        rough[i] = materials[i].roughness;
    }
    ad::Graph g;
    MaterialNodes nodes{g.constant(std::move(kd)), g.constant(std::move(rough)), g.constant(std::move(ks))};
    auto out = shade_graph(g, lighting, nodes, env.roughness_min);
    g.forward({});
    const auto& rad = g.value(out);
    for (std::size_t i = 0; i < N; ++i) {
        auto idx = lighting.pixel_index[i];
        img.radiance[idx] = Vec3(rad[i * 3], rad[i * 3 + 1], rad[i * 3 + 2]);
        img.alpha[idx] = 255;
    }
    return img;
}

void write_shaded_png(const std::filesystem::path& path, const ShadedImage& image, bool with_alpha) {
    Image out(image.width, image.height, with_alpha ? 4 : 3);
    for (std::size_t i = 0; i < image.radiance.size(); ++i) {
        for (int c = 0; c < 3; ++c) out.data[i * out.channels + c] = image.radiance[i][c];
        if (with_alpha) out.data[i * 4 + 3] = image.alpha[i] / 255.0;
    }
    write_png(path, out, true);
}

}  // namespace dsdtex

#include "dsdtex/guidance.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>

#include "dsdtex/random.hpp"

namespace dsdtex {

namespace {

void require_same_shape(const ad::Tensor& a, const ad::Tensor& b, const char* what) {
    if (a.shape != b.shape)
        throw GuidanceError(std::string(what) + ": shape " + ad::to_string(a.shape) + " vs " + ad::to_string(b.shape));
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

void ScheduleConfig::validate() const {
    if (steps < 2) throw GuidanceError("schedule.steps must be >= 2");
    if (family != ScheduleFamily::Cosine && !(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
        throw GuidanceError("schedule betas must satisfy 0 < beta_start < beta_end < 1");
}

NoiseSchedule::NoiseSchedule(ScheduleConfig config) : config_(config) {
    config_.validate();
    const int n = config_.steps;
    std::vector<double> betas(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        double f = static_cast<double>(k) / (n - 1);
        switch (config_.family) {
        case ScheduleFamily::ScaledLinear: {
            double s = std::sqrt(config_.beta_start) + f * (std::sqrt(config_.beta_end) - std::sqrt(config_.beta_start));
            betas[k] = s * s;
            break;
        }
        case ScheduleFamily::Linear:
            betas[k] = config_.beta_start + f * (config_.beta_end - config_.beta_start);
            break;
        case ScheduleFamily::Cosine: {
            auto g = [n](int i) {
                double c = std::cos((static_cast<double>(i) / n + 0.008) / 1.008 * std::numbers::pi / 2.0);
                return c * c;
            };
            betas[k] = std::min(1.0 - g(k + 1) / g(k), 0.999);
            break;
        }
        }
    }
    alphas_.resize(betas.size());
    double prod = 1.0;
    for (std::size_t k = 0; k < betas.size(); ++k) {
        prod *= 1.0 - betas[k];
        alphas_[k] = prod;
    }
    if (alphas_.front() < 0.999 || alphas_.back() > 0.01)
        throw GuidanceError("schedule must start at alpha >= 0.999 and end at alpha <= 0.01");
}

double NoiseSchedule::alpha(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw GuidanceError("timestep " + std::to_string(t) + " outside [0, 1]");
    double pos = t * static_cast<double>(alphas_.size() - 1);
    auto k = std::min(static_cast<std::size_t>(pos), alphas_.size() - 2);
    double f = pos - static_cast<double>(k);
    return (1.0 - f) * alphas_[k] + f * alphas_[k + 1];
}

ad::Tensor add_noise(const ad::Tensor& z, const ad::Tensor& eps, double alpha) {
    require_same_shape(z, eps, "add_noise");
    double a = std::sqrt(alpha), b = std::sqrt(1.0 - alpha);
    ad::Tensor out = z;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z[i] + b * eps[i];
    return out;
}

ad::Tensor cfg_predict(Denoiser& denoiser, DenoiserRequest request, double omega) {
    request.unconditional = false;
    ad::Tensor cond = denoiser.predict(request);
    request.unconditional = true;
    ad::Tensor uncond = denoiser.predict(request);
    require_same_shape(cond, uncond, "cfg_predict");
    ad::Tensor out = cond;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 + omega) * cond[i] - omega * uncond[i];
    return out;
}

double weight_of(WeightMode mode, double alpha) { return mode == WeightMode::Constant ? 1.0 : 1.0 - alpha; }

ad::Tensor sds_gradient(const ad::Tensor& eps_hat, const ad::Tensor& eps, double w) {
    require_same_shape(eps_hat, eps, "sds_gradient");
    ad::Tensor out = eps;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = w * (eps_hat[i] - eps[i]);
    return out;
}

ad::Tensor dsd_gradient(const ad::Tensor& eps_pos, const ad::Tensor& eps_neg, const ad::Tensor& eps, double lambda,
                        double w) {
    if (!(lambda >= 0.0 && lambda < 1.0)) throw GuidanceError("lambda must lie in [0, 1)");
    require_same_shape(eps_pos, eps, "dsd_gradient");
    require_same_shape(eps_neg, eps, "dsd_gradient");
    ad::Tensor out = eps;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = w * (eps_pos[i] - lambda * eps_neg[i] - (1.0 - lambda) * eps[i]);
    return out;
}

double dsd_loss(const ad::Tensor& eps_pos, const ad::Tensor& eps_neg, const ad::Tensor& eps, double lambda, double w) {
    require_same_shape(eps_pos, eps, "dsd_loss");
    require_same_shape(eps_neg, eps, "dsd_loss");
    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        pos += (eps_pos[i] - eps[i]) * (eps_pos[i] - eps[i]);
        neg += (eps_neg[i] - eps[i]) * (eps_neg[i] - eps[i]);
    }
    return w * (pos - lambda * neg);
}

ad::Tensor analytic_gaussian_denoiser(const ad::Tensor& z_t, double alpha, const ad::Tensor& mean, double variance) {
    if (variance < 0.0) throw GuidanceError("variance must be >= 0");
    require_same_shape(z_t, mean, "analytic_gaussian_denoiser");
    double sa = std::sqrt(alpha), sb = std::sqrt(1.0 - alpha);
    double denom = alpha * variance + 1.0 - alpha;
    ad::Tensor out = z_t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sb * (z_t[i] - sa * mean[i]) / denom;
    return out;
}

ad::Tensor analytic_mixture_denoiser(const ad::Tensor& z_t, double alpha, const std::vector<GaussianComponent>& mixture) {
    if (mixture.empty()) throw GuidanceError("empty mixture");
    if (mixture.size() == 1) return analytic_gaussian_denoiser(z_t, alpha, mixture[0].mean, mixture[0].variance);

    const double sa = std::sqrt(alpha);
    const double d = static_cast<double>(z_t.size());
    std::vector<double> logr(mixture.size());
    for (std::size_t k = 0; k < mixture.size(); ++k) {
        const auto& c = mixture[k];
        if (c.weight <= 0.0) throw GuidanceError("mixture weights must be positive");
        if (c.variance < 0.0) throw GuidanceError("variance must be >= 0");
        require_same_shape(z_t, c.mean, "analytic_mixture_denoiser");
        double s = alpha * c.variance + 1.0 - alpha;
        double sq = 0.0;
        for (std::size_t i = 0; i < z_t.size(); ++i) {
            double r = z_t[i] - sa * c.mean[i];
            sq += r * r;
        }
        logr[k] = std::log(c.weight) - 0.5 * d * std::log(2.0 * std::numbers::pi * s) - 0.5 * sq / s;
    }
    double top = *std::max_element(logr.begin(), logr.end());
    double total = 0.0;
    for (auto& l : logr) total += (l = std::exp(l - top));

    ad::Tensor out = ad::Tensor::zeros(z_t.shape);
    for (std::size_t k = 0; k < mixture.size(); ++k) {
        double r = logr[k] / total;
        if (r == 0.0) continue;
        auto part = analytic_gaussian_denoiser(z_t, alpha, mixture[k].mean, mixture[k].variance);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += r * part[i];
    }
    return out;
}

Embedding hash_text_embedding(const std::string& prompt, std::size_t dim) {
    Embedding e(dim, 0.0);
    std::string token;
    std::vector<double> draw(dim);
    auto flush = [&]() {
        if (token.empty()) return;
        Rng rng(fnv1a(token));
        fill_standard_normal(rng, draw);
        for (std::size_t i = 0; i < dim; ++i) e[i] += draw[i];
        token.clear();
    };
    for (char ch : prompt) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        else
            flush();
    }
    flush();
    double norm = 0.0;
    for (double v : e) norm += v * v;
    if (norm > 0.0)
        for (double& v : e) v /= std::sqrt(norm);
    return e;
}

AnalyticDenoiser::AnalyticDenoiser(NoiseSchedule schedule, std::vector<GaussianComponent> unconditional_mixture)
    : schedule_(std::move(schedule)), unconditional_(std::move(unconditional_mixture)) {
    if (unconditional_.empty()) throw GuidanceError("analytic denoiser needs a nonempty unconditional mixture");
}

void AnalyticDenoiser::bind(const Embedding& embedding, std::vector<GaussianComponent> mixture) {
    if (mixture.empty()) throw GuidanceError("cannot bind an empty mixture");
    for (auto& [e, m] : bound_)
        if (e == embedding) {
            m = std::move(mixture);
            return;
        }
    bound_.emplace_back(embedding, std::move(mixture));
}

const std::vector<GaussianComponent>& AnalyticDenoiser::select(const DenoiserRequest& request) const {
    if (request.unconditional) return unconditional_;
    for (const auto& [e, m] : bound_)
        if (e == request.embedding) return m;
    return unconditional_;
}

ad::Tensor AnalyticDenoiser::predict(const DenoiserRequest& request) {
    for (double v : request.latent.data)
        if (!std::isfinite(v)) throw GuidanceError("non-finite latent");
    return analytic_mixture_denoiser(request.latent, schedule_.alpha(request.t), select(request));
}

void GuidanceConfig::validate() const {
    if (!(lambda >= 0.0 && lambda < 1.0)) throw GuidanceError("guidance.lambda must lie in [0, 1)");
    if (!(t_min >= 0.0 && t_min < t_max && t_max <= 1.0))
        throw GuidanceError("guidance.t_min < guidance.t_max must hold within [0, 1]");
    if (!std::isfinite(omega)) throw GuidanceError("guidance.omega must be finite");
    schedule.validate();
}

std::string GuidanceConfig::negative_prompt() const {
    std::string out;
    for (const auto& p : negative_prompts) {
        if (!out.empty()) out += ", ";
        out += p;
    }
    return out;
}

ad::Tensor solid_image(int width, int height, const std::array<double, 3>& rgb) {
    ad::Tensor img = ad::Tensor::zeros({static_cast<std::size_t>(height), static_cast<std::size_t>(width), 3});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rgb[i % 3];
    return img;
}

LocalBackend::LocalBackend(AnalyticDenoiser denoiser, std::size_t embedding_dim)
    : denoiser_(std::move(denoiser)), dim_(embedding_dim) {}

Embedding LocalBackend::embed_text(const std::string& prompt) { return hash_text_embedding(prompt, dim_); }

ad::Tensor LocalBackend::predict_guided(const DenoiserRequest& request, double omega) {
    return cfg_predict(denoiser_, request, omega);
}

}  // namespace dsdtex

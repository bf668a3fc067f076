#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsdtex/autodiff.hpp"

namespace dsdtex {

class GuidanceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ScheduleFamily { ScaledLinear, Linear, Cosine };

struct ScheduleConfig {
    ScheduleFamily family = ScheduleFamily::ScaledLinear;
    int steps = 1000;
    double beta_start = 0.00085;
    double beta_end = 0.012;

    void validate() const;
    bool operator==(const ScheduleConfig&) const = default;
};

// Cumulative signal level alpha(t) over continuous t in [0, 1], linearly
// interpolated between the discrete steps.
class NoiseSchedule {
public:
    explicit NoiseSchedule(ScheduleConfig config = {});

    double alpha(double t) const;
    const std::vector<double>& alphas_cumprod() const { return alphas_; }
    const ScheduleConfig& config() const { return config_; }

private:
    ScheduleConfig config_;
    std::vector<double> alphas_;
};

ad::Tensor add_noise(const ad::Tensor& z, const ad::Tensor& eps, double alpha);

using Embedding = std::vector<double>;

struct DenoiserRequest {
    ad::Tensor latent;  // z_t
    Embedding embedding;
    double t = 0.5;
    std::optional<ad::Tensor> depth;
    bool unconditional = false;
};

// Raw noise predictor eps_phi(z_t, y, t).
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual ad::Tensor predict(const DenoiserRequest& request) = 0;
};

// (1 + omega) * eps_cond - omega * eps_uncond.
ad::Tensor cfg_predict(Denoiser& denoiser, DenoiserRequest request, double omega);

enum class WeightMode { Constant, OneMinusAlpha };

double weight_of(WeightMode mode, double alpha);

ad::Tensor sds_gradient(const ad::Tensor& eps_hat, const ad::Tensor& eps, double w);
// w * (eps_pos - lambda * eps_neg - (1 - lambda) * eps). Throws GuidanceError for lambda outside [0, 1).
ad::Tensor dsd_gradient(const ad::Tensor& eps_pos, const ad::Tensor& eps_neg, const ad::Tensor& eps, double lambda,
                        double w);
// w * (||eps_pos - eps||^2 - lambda * ||eps_neg - eps||^2).
double dsd_loss(const ad::Tensor& eps_pos, const ad::Tensor& eps_neg, const ad::Tensor& eps, double lambda, double w);

struct GaussianComponent {
    double weight = 1.0;
    ad::Tensor mean;
    double variance = 0.0;
};

// Exact MMSE noise prediction for data ~ N(mean, variance I).
ad::Tensor analytic_gaussian_denoiser(const ad::Tensor& z_t, double alpha, const ad::Tensor& mean, double variance);
// Mixture of isotropic Gaussians; components are weighted by their posterior responsibilities.
ad::Tensor analytic_mixture_denoiser(const ad::Tensor& z_t, double alpha, const std::vector<GaussianComponent>& mixture);

// Deterministic bag-of-words hashing encoder used by the local backend.
Embedding hash_text_embedding(const std::string& prompt, std::size_t dim = 16);

// Analytic backend: conditioning embeddings select a data mixture. Embeddings bound
// with bind() map to their mixture; unconditional calls and unknown embeddings map to
// the unconditional mixture.
class AnalyticDenoiser : public Denoiser {
public:
    AnalyticDenoiser(NoiseSchedule schedule, std::vector<GaussianComponent> unconditional_mixture);

    void bind(const Embedding& embedding, std::vector<GaussianComponent> mixture);
    ad::Tensor predict(const DenoiserRequest& request) override;

    const NoiseSchedule& schedule() const { return schedule_; }

private:
    const std::vector<GaussianComponent>& select(const DenoiserRequest& request) const;

    NoiseSchedule schedule_;
    std::vector<GaussianComponent> unconditional_;
    std::vector<std::pair<Embedding, std::vector<GaussianComponent>>> bound_;
};

enum class GuidanceMode { Dsd, Sds };

// Source of the negative image: the previous iteration's render as cached, or the
// previous iteration's parameters re-rendered from the current camera.
enum class NegativeView { Previous, Current };

struct GuidanceConfig {
    GuidanceMode mode = GuidanceMode::Dsd;
    double lambda = 0.5;
    double omega = 7.5;
    double t_min = 0.02;
    double t_max = 0.98;
    WeightMode weight = WeightMode::Constant;
    ScheduleConfig schedule;
    std::string prompt;
    std::vector<std::string> negative_prompts{"disfigured", "ugly"};
    NegativeView negative_view = NegativeView::Previous;
    bool depth_conditioning = true;
    // Feed the denoiser sRGB-encoded images instead of linear radiance.
    bool srgb_latent = false;

    void validate() const;
    // Negative prompts joined with ", ".
    std::string negative_prompt() const;
    bool operator==(const GuidanceConfig&) const = default;
};

// Solid-color image mean [H, W, 3].
ad::Tensor solid_image(int width, int height, const std::array<double, 3>& rgb);

// What the trainer needs from a guidance source. Images are [H, W, 3] in [0, 1].
class GuidanceBackend {
public:
    virtual ~GuidanceBackend() = default;
    virtual Embedding embed_text(const std::string& prompt) = 0;
    virtual ad::Tensor encode_image(const ad::Tensor& image) = 0;
    // Maps a gradient on the latent back onto the image.
    virtual ad::Tensor image_gradient(const ad::Tensor& image, const ad::Tensor& latent,
                                      const ad::Tensor& latent_grad) = 0;
    // Guided prediction at scale omega.
    virtual ad::Tensor predict_guided(const DenoiserRequest& request, double omega) = 0;
    virtual double alpha(double t) const = 0;
};

// Latent is the image itself; guidance is combined locally with cfg_predict.
class LocalBackend : public GuidanceBackend {
public:
    explicit LocalBackend(AnalyticDenoiser denoiser, std::size_t embedding_dim = 16);

    Embedding embed_text(const std::string& prompt) override;
    ad::Tensor encode_image(const ad::Tensor& image) override { return image; }
    ad::Tensor image_gradient(const ad::Tensor&, const ad::Tensor&, const ad::Tensor& latent_grad) override {
        return latent_grad;
    }
    ad::Tensor predict_guided(const DenoiserRequest& request, double omega) override;
    double alpha(double t) const override { return denoiser_.schedule().alpha(t); }

    AnalyticDenoiser& denoiser() { return denoiser_; }

private:
    AnalyticDenoiser denoiser_;
    std::size_t dim_;
};

}  // namespace dsdtex

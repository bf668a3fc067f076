#include <doctest.h>

#include <cmath>

#include "dsdtex/guidance.hpp"
#include "dsdtex/trainer.hpp"
#include "support.hpp"

using namespace dsdtex;
using namespace dsdtex::testing;
using ad::Tensor;

namespace {

Tensor vec(std::vector<double> v) {
    auto n = v.size();
    return Tensor({n}, std::move(v));
}

// Denoiser returning fixed conditional and unconditional predictions.
struct FixedDenoiser : Denoiser {
    Tensor cond, uncond;
    Tensor predict(const DenoiserRequest& r) override { return r.unconditional ? uncond : cond; }
};

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("add_noise") {
    Tensor z = vec({2.0, -1.0}), eps = vec({4.0, 0.5});
    CHECK(add_noise(z, eps, 1.0).data == z.data);
    CHECK(add_noise(z, eps, 0.0).data == eps.data);
    CHECK(add_noise(vec({2.0}), vec({4.0}), 0.25)[0] == doctest::Approx(4.4641).epsilon(1e-4));
    CHECK_THROWS(add_noise(z, vec({1.0}), 0.5));
}

TEST_CASE("add_noise marginal variance") {
    Gen gen(10);
    const double sigma2 = 0.3, alpha = 0.4, mu = 0.7;
    const std::size_t n = 100000;
    Tensor z = Tensor::zeros({n}), eps = Tensor::zeros({n});
    fill_standard_normal(gen.rng, z.data);
    for (auto& v : z.data) v = mu + std::sqrt(sigma2) * v;
    fill_standard_normal(gen.rng, eps.data);
    Tensor zt = add_noise(z, eps, alpha);
    double mean = 0, var = 0;
    for (double v : zt.data) mean += v;
    mean /= n;
    for (double v : zt.data) var += (v - mean) * (v - mean);
    var /= n - 1;
    CHECK(var == doctest::Approx(alpha * sigma2 + (1 - alpha)).epsilon(0.02));
}

TEST_CASE("classifier-free guidance") {
    FixedDenoiser d;
    d.cond = vec({1.0, 2.0, -0.5});
    d.uncond = vec({0.5, -1.0, 0.25});
    DenoiserRequest req{vec({0, 0, 0}), {1.0}, 0.5, std::nullopt, false};
    CHECK(cfg_predict(d, req, 0.0).data == d.cond.data);
    CHECK(cfg_predict(d, req, -1.0).data == d.uncond.data);
    auto g = cfg_predict(d, req, 7.5);
    for (int i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(8.5 * d.cond[i] - 7.5 * d.uncond[i]));
    d.uncond = d.cond;
    for (double w : {-3.0, 0.0, 2.0, 7.5, 100.0}) CHECK(max_abs_diff(cfg_predict(d, req, w), d.cond) < 1e-12);
}

TEST_CASE("sds gradient") {
    Tensor e = vec({0.3, -0.2});
    CHECK(sds_gradient(e, e, 1.0).data == std::vector<double>{0.0, 0.0});
    CHECK(sds_gradient(vec({1.0, 5.0}), e, 0.0).data == std::vector<double>{0.0, 0.0});
    auto g = sds_gradient(vec({0.8, -0.7}), e, 1.0);
    CHECK(g[0] == doctest::Approx(0.5));
    CHECK(g[1] == doctest::Approx(-0.5));
    CHECK(weight_of(WeightMode::Constant, 0.3) == 1.0);
    CHECK(weight_of(WeightMode::OneMinusAlpha, 0.3) == doctest::Approx(0.7));
}

TEST_CASE("dsd gradient algebra") {
    CHECK(dsd_gradient(vec({1.0}), vec({0.4}), vec({0.2}), 0.5, 1.0)[0] == doctest::Approx(0.7).epsilon(1e-15));
    Gen gen(4);
    for (int trial = 0; trial < 200; ++trial) {
        Tensor pos = gen.tensor({6}), neg = gen.tensor({6}), eps = gen.tensor({6});
        double w = gen.real(0, 2), lambda = gen.real(0, 0.99);
        CHECK(max_abs_diff(dsd_gradient(pos, neg, eps, 0.0, w), sds_gradient(pos, eps, w)) == 0.0);
        auto same = dsd_gradient(pos, pos, eps, lambda, w);
        for (std::size_t i = 0; i < 6; ++i) CHECK(same[i] == doctest::Approx(w * (1 - lambda) * (pos[i] - eps[i])));
    }
    CHECK_THROWS_AS(dsd_gradient(vec({1}), vec({1}), vec({1}), 1.0, 1.0), GuidanceError);
    CHECK_THROWS_AS(dsd_gradient(vec({1}), vec({1}), vec({1}), -0.1, 1.0), GuidanceError);
}

TEST_CASE("dsd loss") {
    Tensor pos = vec({1.0, 2.0}), neg = vec({0.0, 1.0}), eps = vec({0.5, 0.5});
    double sq = 0.25 + 2.25;
    CHECK(dsd_loss(pos, neg, eps, 0.0, 1.0) == doctest::Approx(sq));
    CHECK(dsd_loss(pos, pos, eps, 0.5, 1.0) == doctest::Approx(0.5 * sq));
    CHECK(dsd_loss(eps, eps, eps, 0.5, 2.0) == 0.0);
}

TEST_CASE("analytic gaussian denoiser identities") {
    Gen gen(5);
    const double alpha = 0.37;
    Tensor mu = gen.tensor({8});
    Tensor at_mean = mu;
    for (auto& v : at_mean.data) v *= std::sqrt(alpha);
    CHECK(max_abs_diff(analytic_gaussian_denoiser(at_mean, alpha, mu, 0.4), Tensor::zeros({8})) < 1e-15);

    Tensor eps = gen.tensor({8});
    Tensor zt = add_noise(mu, eps, alpha);
    CHECK(max_abs_diff(analytic_gaussian_denoiser(zt, alpha, mu, 0.0), eps) < 1e-12);

    Tensor any = gen.tensor({8});
    auto e = analytic_gaussian_denoiser(any, alpha, mu, 0.0);
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(e[i] == doctest::Approx((any[i] - std::sqrt(alpha) * mu[i]) / std::sqrt(1 - alpha)));
}

TEST_CASE("mixture denoiser") {
    Gen gen(6);
    Tensor mu = gen.tensor({5}), z = gen.tensor({5});
    auto single = analytic_gaussian_denoiser(z, 0.5, mu, 0.2);
    auto pair = analytic_mixture_denoiser(z, 0.5, {{0.3, mu, 0.2}, {0.7, mu, 0.2}});
    CHECK(max_abs_diff(single, pair) < 1e-12);

    // Far from one component, the mixture follows the nearer one.
    Tensor far = Tensor::filled({5}, 50.0);
    auto near_only = analytic_gaussian_denoiser(z, 0.5, mu, 0.0);
    auto mixed = analytic_mixture_denoiser(z, 0.5, {{0.5, mu, 0.0}, {0.5, far, 0.0}});
    CHECK(max_abs_diff(near_only, mixed) < 1e-9);
    for (double v : mixed.data) CHECK(std::isfinite(v));
}

TEST_CASE("noise schedules") {
    for (auto fam : {ScheduleFamily::ScaledLinear, ScheduleFamily::Linear, ScheduleFamily::Cosine}) {
        ScheduleConfig c;
        c.family = fam;
        if (fam == ScheduleFamily::Linear) {
            c.beta_start = 1e-4;
            c.beta_end = 0.02;
        }
        NoiseSchedule s(c);
        CHECK(s.alpha(0.0) >= 0.999);
        CHECK(s.alpha(1.0) <= 0.01);
        double prev = 2.0;
        for (int i = 0; i <= 100; ++i) {
            double a = s.alpha(i / 100.0);
            CHECK(a <= prev);
            CHECK(a > 0.0);
            prev = a;
        }
        CHECK_THROWS(s.alpha(-0.01));
        CHECK_THROWS(s.alpha(1.01));
    }
    ScheduleConfig bad;
    bad.steps = 0;
    CHECK_THROWS(NoiseSchedule{bad});
}

TEST_CASE("text embeddings") {
    auto a = hash_text_embedding("a man in a suit with a belt and tie");
    CHECK(a.size() == 16);
    CHECK(a == hash_text_embedding("a man in a suit with a belt and tie"));
    CHECK(a != hash_text_embedding("the face of a man in a suit with a belt and tie"));
    CHECK(hash_text_embedding("x", 7).size() == 7);
}

TEST_CASE("analytic denoiser binds prompts to mixtures") {
    NoiseSchedule sched;
    Tensor gray = Tensor::filled({4}, 0.5), red = Tensor::filled({4}, 0.9);
    AnalyticDenoiser d(sched, {{1.0, gray, 0.0}});
    auto e = hash_text_embedding("red");
    d.bind(e, {{1.0, red, 0.0}});
    Tensor z = Tensor::filled({4}, 0.1);
    const double a = sched.alpha(0.3);
    CHECK(max_abs_diff(d.predict({z, e, 0.3, std::nullopt, false}), analytic_gaussian_denoiser(z, a, red, 0.0)) == 0.0);
    CHECK(max_abs_diff(d.predict({z, e, 0.3, std::nullopt, true}), analytic_gaussian_denoiser(z, a, gray, 0.0)) == 0.0);
    CHECK(max_abs_diff(d.predict({z, hash_text_embedding("blue"), 0.3, std::nullopt, false}),
                       analytic_gaussian_denoiser(z, a, gray, 0.0)) == 0.0);
}

TEST_CASE("direct SDS descent converges to the mean") {
    NoiseSchedule sched;
    const double alpha = sched.alpha(0.5);
    Tensor mu = vec({0.8, 0.1, 0.1, 0.5});
    Tensor theta = Tensor::zeros({4});
    AdamWConfig opt;
    opt.weight_decay = 0.0;
    AdamWState state;
    Rng rng(1);
    for (int step = 0; step < 500; ++step) {
        Tensor eps = Tensor::zeros({4});
        fill_standard_normal(rng, eps.data);
        auto eh = analytic_gaussian_denoiser(add_noise(theta, eps, alpha), alpha, mu, 0.0);
        std::vector<Tensor> grads{sds_gradient(eh, eps, 1.0)};
        std::array<Tensor*, 1> params{&theta};
        adamw_update(params, grads, state, opt);
    }
    double norm = 0;
    for (std::size_t i = 0; i < 4; ++i) norm += (theta[i] - mu[i]) * (theta[i] - mu[i]);
    CHECK(std::sqrt(norm) < 1e-2);
}

TEST_CASE("guidance config validation") {
    GuidanceConfig c;
    c.prompt = "x";
    CHECK_NOTHROW(c.validate());
    CHECK(c.negative_prompt() == "disfigured, ugly");
    c.lambda = 1.0;
    CHECK_THROWS(c.validate());
    c = GuidanceConfig{};
    c.t_min = 0.9;
    c.t_max = 0.1;
    CHECK_THROWS(c.validate());
}

TEST_CASE("local backend") {
    NoiseSchedule sched;
    Tensor img = solid_image(4, 3, {0.1, 0.2, 0.3});
    CHECK(img.shape == ad::Shape{3, 4, 3});
    CHECK(img[5] == 0.3);
    LocalBackend b(AnalyticDenoiser(sched, {{1.0, img, 0.0}}));
    CHECK(b.encode_image(img).data == img.data);
    CHECK(b.image_gradient(img, img, img).data == img.data);
    CHECK(b.embed_text("hi") == hash_text_embedding("hi"));
    CHECK(b.alpha(0.4) == sched.alpha(0.4));
}

#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "pldiff/gradcheck.hpp"
#include "pldiff/ldm.hpp"

using namespace pldiff;

namespace {

ModelConfig tiny_config() {
    ModelConfig m;
    m.d_ling = 4;
    m.vocab = 8;
    m.d_z = 4;
    m.d_cond = 8;
    m.vae_width = 8;
    m.vae_layers = 1;
    m.vae_heads = 2;
    m.denoiser_width = 8;
    m.denoiser_layers = 1;
    m.denoiser_heads = 2;
    m.prototypes = 6;
    return m;
}

FeatureFrames make_frames(int frames, int d_ling, Rng& rng) {
    FeatureFrames ff;
    ff.count = frames;
    ff.d_ling = d_ling;
    ff.linguistic.resize(static_cast<std::size_t>(frames) * d_ling);
    for (auto& x : ff.linguistic) x = static_cast<float>(rng.normal());
    ff.f0_norm.assign(static_cast<std::size_t>(frames), 0.5f);
    ff.amp_periodic.assign(static_cast<std::size_t>(frames), 0.5f);
    ff.amp_aperiodic.assign(static_cast<std::size_t>(frames), 0.25f);
    return ff;
}

template <typename T>
ConditionSet<T> random_conditions(int p_count, int d_cond, Rng& rng) {
    ConditionSet<T> set;
    set.c_text = Tensor<T>::randn({p_count, d_cond}, rng);
    set.c_spk = Tensor<T>::randn({p_count, d_cond}, rng);
    return set;
}

// dyadic rationals make float CFG arithmetic exact
std::vector<float> dyadic(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform_int(-512, 512)) / 256.0f;
    return v;
}

}  // namespace

TEST_CASE("denoiser output shape equals input shape") {
    Rng rng(600);
    Denoiser<float> den(tiny_config(), rng);
    Rng crng(601);
    auto cond = random_conditions<float>(5, 8, crng);
    auto z = Tensor<float>::randn({5, 4}, crng);
    auto eps = den(z, 17.0, cond);
    CHECK(eps.shape() == z.shape());

    auto frac = den(z, 17.5, cond);  // fractional timesteps are fine
    CHECK(frac.shape() == z.shape());
}

TEST_CASE("null flags make the denoiser ignore condition contents") {
    Rng rng(600);
    Denoiser<float> den(tiny_config(), rng);
    Rng crng(602);
    auto z = Tensor<float>::randn({3, 4}, crng);

    ConditionSet<float> garbage;
    garbage.null_text = true;
    garbage.null_spk = true;
    garbage.c_text = Tensor<float>::randn({3, 8}, crng);
    garbage.c_spk = Tensor<float>::randn({3, 8}, crng);

    ConditionSet<float> zeros;
    zeros.null_text = true;
    zeros.null_spk = true;
    zeros.c_text = Tensor<float>::zeros({3, 8});
    zeros.c_spk = Tensor<float>::zeros({3, 8});

    auto a = den(z, 11.0, garbage);
    auto b = den(z, 11.0, zeros);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("condition dropout rates match the closed forms") {
    Rng rng(12345);
    const int n = 1000000;
    int text_null = 0, both_null = 0, spk_null = 0;
    for (int i = 0; i < n; ++i) {
        auto [nt, ns] = condition_dropout(rng, 0.05, 0.10, 0.10);
        text_null += nt ? 1 : 0;
        spk_null += ns ? 1 : 0;
        both_null += nt && ns ? 1 : 0;
    }
    // P(null_text) = 1 - 0.95*0.90 = 0.145
    CHECK(std::abs(text_null / static_cast<double>(n) - 0.145) < 0.002);
    // P(both) = 0.10 + 0.90*0.05*0.10 = 0.1045
    CHECK(std::abs(both_null / static_cast<double>(n) - 0.1045) < 0.002);
    // P(null_spk) = 1 - 0.90*0.90 = 0.19
    CHECK(std::abs(spk_null / static_cast<double>(n) - 0.19) < 0.002);

    Rng a(77), b(77);
    for (int i = 0; i < 100; ++i) {
        auto fa = condition_dropout(a, 0.05, 0.10, 0.10);
        auto fb = condition_dropout(b, 0.05, 0.10, 0.10);
        CHECK(fa == fb);
    }
}

TEST_CASE("dual cfg identities") {
    Rng rng(700);
    const std::size_t n = 16;

    SUBCASE("zero weights return eps_full exactly") {
        auto f = dyadic(n, rng), s = dyadic(n, rng), t = dyadic(n, rng), u = dyadic(n, rng);
        auto out = dual_cfg(f, s, t, u, {.w_text = 0.0, .w_spk = 0.0});
        for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == f[i]);
    }
    SUBCASE("equal inputs collapse to the input for any weights") {
        auto e = dyadic(n, rng);
        auto out = dual_cfg(e, e, e, e, {.w_text = 3.7, .w_spk = -1.2});
        for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == e[i]);
    }
    SUBCASE("scalar example") {
        std::vector<double> f = {1.0}, s = {0.8}, t = {0.6}, u = {0.5};
        auto out = dual_cfg(f, s, t, u, {.w_text = 3.0, .w_spk = 2.0});
        CHECK(out[0] == doctest::Approx(1.9).epsilon(1e-12));
    }
    SUBCASE("affine in each weight, exactly on dyadic inputs") {
        auto f = dyadic(n, rng), s = dyadic(n, rng), t = dyadic(n, rng), u = dyadic(n, rng);
        for (double base : {0.0, 1.0, 2.0}) {
            auto w0 = dual_cfg(f, s, t, u, {.w_text = base, .w_spk = 1.0});
            auto w1 = dual_cfg(f, s, t, u, {.w_text = base + 2.0, .w_spk = 1.0});
            for (std::size_t i = 0; i < n; ++i) CHECK(w1[i] - w0[i] == 2.0f * (t[i] - u[i]));

            auto v0 = dual_cfg(f, s, t, u, {.w_text = 1.0, .w_spk = base});
            auto v1 = dual_cfg(f, s, t, u, {.w_text = 1.0, .w_spk = base + 4.0});
            for (std::size_t i = 0; i < n; ++i) CHECK(v1[i] - v0[i] == 4.0f * (s[i] - u[i]));
        }
    }
    SUBCASE("constant shifts pass through the eps_full term only, bitwise") {
        auto f = dyadic(n, rng), s = dyadic(n, rng), t = dyadic(n, rng), u = dyadic(n, rng);
        Rng crng(41);
        const float c = static_cast<float>(crng.uniform_int(-64, 64)) / 16.0f;  // seeded constant
        auto add_c = [c](std::vector<float> v) {
            for (auto& x : v) x += c;
            return v;
        };
        GuidanceWeights w{.w_text = 2.0, .w_spk = 3.0};
        auto base = dual_cfg(f, s, t, u, w);
        auto shifted = dual_cfg(add_c(f), add_c(s), add_c(t), add_c(u), w);
        for (std::size_t i = 0; i < n; ++i) CHECK(shifted[i] == base[i] + c);
    }
    SUBCASE("shape mismatch is an error") {
        std::vector<float> f(4, 0.0f), bad(3, 0.0f);
        CHECK_THROWS(dual_cfg(f, f, f, bad, GuidanceWeights{}));
    }
}

TEST_CASE("ldm loss basics") {
    Rng rng(800);
    Denoiser<float> den(tiny_config(), rng);
    auto sched = linear_beta_schedule(200, 1e-4, 0.03);
    Rng crng(801);
    auto cond = random_conditions<float>(3, 8, crng);
    std::vector<float> mu(12), eps(12);
    for (auto& v : mu) v = static_cast<float>(crng.normal());
    for (auto& v : eps) v = static_cast<float>(crng.normal());

    auto loss = ldm_loss(den, mu, 3, cond, sched, 57, eps);
    CHECK(loss.item() >= 0.0f);

    // fixed inputs reproduce the loss bit-exactly
    auto loss2 = ldm_loss(den, mu, 3, cond, sched, 57, eps);
    CHECK(loss.item() == loss2.item());

    // an oracle predictor that returns the true eps would have zero loss
    auto eps_t = Tensor<float>::from({3, 4}, eps);
    CHECK(l1_loss(eps_t, eps_t).item() == 0.0f);
}

TEST_CASE("ldm composed loss passes finite differences at 64-bit") {
    Rng rng(900);
    ModelConfig cfg = tiny_config();
    Denoiser<double> den(cfg, rng);
    Conditioners<double> cond(cfg, rng);
    auto sched = linear_beta_schedule(200, 1e-4, 0.03);

    PhonemeSeq seq;
    seq.ids = {2, 6};
    seq.word_starts = {0};
    Rng fr(91);
    auto ref = make_frames(6, 4, fr);

    std::vector<double> mu(8), eps(8);
    for (auto& v : mu) v = fr.normal();
    for (auto& v : eps) v = fr.normal();

    std::vector<Tensor<double>> leaves = den.params().tensors();
    auto cparams = cond.params().tensors();
    leaves.insert(leaves.end(), cparams.begin(), cparams.end());

    auto loss_fn = [&](std::vector<Tensor<double>>&) {
        auto set = cond.build(seq, &ref, 42, false, false);
        return ldm_loss(den, mu, 2, set, sched, 100, eps);
    };
    const double err = grad_check<double>(leaves, loss_fn, 1e-5);
    CHECK(err < 1e-3);
}

TEST_CASE("sampler: zero weights equal the single fully-conditioned path bitwise") {
    Rng rng(1000);
    Denoiser<float> den(tiny_config(), rng);
    Rng crng(1001);
    auto full = random_conditions<float>(2, 8, crng);
    ConditionSet<float> null_set;
    null_set.null_text = null_set.null_spk = true;
    null_set.c_text = Tensor<float>::zeros({2, 8});
    null_set.c_spk = Tensor<float>::zeros({2, 8});
    ConditionSet<float> spk_only = full;
    spk_only.null_text = true;
    ConditionSet<float> text_only = full;
    text_only.null_spk = true;

    auto sched = linear_beta_schedule(20, 1e-4, 0.05);
    auto fn = make_denoiser_eps_fn(den, full, spk_only, text_only, null_set);

    Rng sample_rng(55);
    auto z = sample_latent(fn, 2, 4, sched, nullptr, {.w_text = 0.0, .w_spk = 0.0},
                           SamplerMode::Full, sample_rng);

    // manual single-call loop with the same rng stream
    Rng manual_rng(55);
    std::vector<float> m(8);
    for (auto& v : m) v = static_cast<float>(manual_rng.normal());
    std::vector<float> xi(8, 0.0f);
    for (int t = 20; t >= 1; --t) {
        auto eps = fn(m, static_cast<double>(t), CondVariant::Full);
        if (t > 1)
            for (auto& v : xi) v = static_cast<float>(manual_rng.normal());
        m = ancestral_step(m, eps, t, sched, xi);
    }
    for (std::size_t i = 0; i < 8; ++i) CHECK(z[i] == m[i]);
}

TEST_CASE("fast mode executes exactly sixteen reverse updates") {
    auto sched = linear_beta_schedule(200, 1e-4, 0.03);
    auto plan = fast_sampling_plan(default_fast_schedule(), sched);
    CHECK(plan.steps() == 16);

    GuidedEpsFn zero_fn = [](const std::vector<float>& z, double, CondVariant) {
        return std::vector<float>(z.size(), 0.0f);
    };
    Rng rng(9);
    SampleTrace trace;
    auto z = sample_latent(zero_fn, 2, 4, sched, &plan, {.w_text = 0.0, .w_spk = 0.0},
                           SamplerMode::Fast, rng, &trace);
    CHECK(trace.t.size() == 16);
    CHECK(z.size() == 8);
    // trace timesteps decrease across the reverse pass
    for (std::size_t i = 1; i < trace.t.size(); ++i) CHECK(trace.t[i] < trace.t[i - 1]);
}

TEST_CASE("sampler aborts on non-finite predictions with the step index") {
    auto sched = linear_beta_schedule(10, 1e-4, 0.05);
    GuidedEpsFn bad_fn = [](const std::vector<float>& z, double, CondVariant) {
        return std::vector<float>(z.size(), std::numeric_limits<float>::infinity());
    };
    Rng rng(3);
    CHECK_THROWS_WITH_AS(sample_latent(bad_fn, 1, 4, sched, nullptr, GuidanceWeights{},
                                       SamplerMode::Full, rng),
                         doctest::Contains("step"), std::runtime_error);
}

TEST_CASE("gaussian-data sampler oracle, reduced size") {
    // data ~ N(m, s^2) elementwise; the optimal predictor is linear in z
    const double m = 0.3, s = 1.0;
    auto sched = linear_beta_schedule(200, 1e-4, 0.03);
    auto plan = fast_sampling_plan(default_fast_schedule(), sched);

    GuidedEpsFn oracle = [&](const std::vector<float>& z, double t, CondVariant) {
        const double sq = sched.sqrt_alpha_bar_cont(t);
        const double abar = sq * sq;
        const double denom = abar * s * s + 1.0 - abar;
        std::vector<float> eps(z.size());
        for (std::size_t i = 0; i < z.size(); ++i)
            eps[i] = static_cast<float>(std::sqrt(1.0 - abar) * (z[i] - sq * m) / denom);
        return eps;
    };

    const int n_samples = 400;
    for (auto mode : {SamplerMode::Full, SamplerMode::Fast}) {
        Rng rng(2026);
        double sum = 0, sum2 = 0;
        for (int i = 0; i < n_samples; ++i) {
            auto z = sample_latent(oracle, 1, 1, sched, mode == SamplerMode::Fast ? &plan : nullptr,
                                   {.w_text = 0.0, .w_spk = 0.0}, mode, rng);
            sum += z[0];
            sum2 += static_cast<double>(z[0]) * z[0];
        }
        const double mean = sum / n_samples;
        const double var = sum2 / n_samples - mean * mean;
        CHECK(std::abs(mean - m) < 4.0 * s / std::sqrt(static_cast<double>(n_samples)));
        CHECK(var > 0.85 * s * s);
        CHECK(var < 1.15 * s * s);
    }
}

TEST_CASE("golden: untrained seeded denoiser output is stable") {
    Rng rng(161803);
    Denoiser<float> den(tiny_config(), rng);
    Rng crng(162);
    auto cond = random_conditions<float>(3, 8, crng);
    auto z = Tensor<float>::randn({3, 4}, crng);
    auto eps = den(z, 42.0, cond);
    double sum = 0;
    for (float v : eps.data()) sum += v;
    // frozen after the first verified run
    CHECK(sum == doctest::Approx(-0.770315647).epsilon(1e-6));
}

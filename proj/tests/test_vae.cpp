#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "pldiff/gradcheck.hpp"
#include "pldiff/vae.hpp"

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
    m.disc_channels = 4;
    m.disc_kernel = 3;
    return m;
}

FeatureFrames tiny_features(int frames, int d_ling, Rng& rng) {
    FeatureFrames ff;
    ff.count = frames;
    ff.d_ling = d_ling;
    ff.linguistic.resize(static_cast<std::size_t>(frames) * d_ling);
    for (auto& x : ff.linguistic) x = static_cast<float>(rng.normal());
    ff.f0_norm.resize(static_cast<std::size_t>(frames));
    ff.amp_periodic.resize(static_cast<std::size_t>(frames));
    ff.amp_aperiodic.resize(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        ff.f0_norm[static_cast<std::size_t>(f)] = f % 3 == 0 ? 0.0f : static_cast<float>(0.5 + 0.1 * rng.uniform());
        ff.amp_periodic[static_cast<std::size_t>(f)] = static_cast<float>(rng.uniform());
        ff.amp_aperiodic[static_cast<std::size_t>(f)] = static_cast<float>(rng.uniform());
    }
    return ff;
}

template <typename T>
Tensor<T> frames_tensor(const FeatureFrames& ff) {
    auto s = ff.stacked();
    Tensor<T> t = Tensor<T>::raw({ff.count, ff.feat_dim()});
    for (std::size_t i = 0; i < s.size(); ++i) t.data()[i] = static_cast<T>(s[i]);
    return t;
}

PhonemeSeq tiny_seq() {
    PhonemeSeq seq;
    seq.ids = {1, 4, 2};
    seq.word_starts = {0, 2};
    return seq;
}

}  // namespace

TEST_CASE("encode produces one latent per phoneme") {
    Rng rng(100);
    Vae<float> vae(tiny_config(), rng);
    Rng data_rng(7);
    auto ff = tiny_features(9, 4, data_rng);
    auto latent = vae.encode(tiny_seq(), ff);
    CHECK(latent.mean.rows() == 3);
    CHECK(latent.mean.cols() == 4);
    CHECK(latent.logvar.rows() == 3);
    for (float v : latent.logvar.data()) {
        CHECK(v >= -10.0f);
        CHECK(v <= 10.0f);
    }
    PhonemeSeq empty;
    CHECK_THROWS(vae.encode(empty, ff));
}

TEST_CASE("encode is sensitive to frame order") {
    Rng rng(100);
    Vae<float> vae(tiny_config(), rng);
    Rng data_rng(7);
    auto ff = tiny_features(9, 4, data_rng);
    auto base = vae.encode(tiny_seq(), ff);

    FeatureFrames permuted = ff;
    for (int c = 0; c < 4; ++c)
        std::swap(permuted.linguistic[static_cast<std::size_t>(c)],
                  permuted.linguistic[static_cast<std::size_t>(8 * 4 + c)]);
    std::swap(permuted.f0_norm[0], permuted.f0_norm[8]);
    auto swapped = vae.encode(tiny_seq(), permuted);
    double diff = 0;
    for (std::size_t i = 0; i < base.mean.size(); ++i)
        diff = std::max(diff, std::abs(static_cast<double>(base.mean[i] - swapped.mean[i])));
    CHECK(diff > 1e-7);
}

TEST_CASE("reparameterized sampling") {
    PhonemeLatent<double> latent;
    latent.mean = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
    latent.logvar = Tensor<double>::zeros({2, 3});

    Rng rng(100);
    Vae<double> vae(tiny_config(), rng);

    SUBCASE("zero noise returns the mean") {
        auto z = vae.reparam_sample(latent, Tensor<double>::zeros({2, 3}));
        for (std::size_t i = 0; i < 6; ++i) CHECK(z[i] == latent.mean[i]);
    }
    SUBCASE("unit logvar-zero adds the noise directly") {
        auto n = Tensor<double>::from({2, 3}, {0.5, -0.5, 1, -1, 2, -2});
        auto z = vae.reparam_sample(latent, n);
        for (std::size_t i = 0; i < 6; ++i) CHECK(z[i] == latent.mean[i] + n[i]);
    }
    SUBCASE("seeded case matches the 64-bit formula") {
        Rng nrng(55);
        latent.logvar = Tensor<double>::randn({2, 3}, nrng);
        auto n = Tensor<double>::randn({2, 3}, nrng);
        auto z = vae.reparam_sample(latent, n);
        for (std::size_t i = 0; i < 6; ++i) {
            const double expect = latent.mean[i] + std::exp(latent.logvar[i] / 2.0) * n[i];
            CHECK(z[i] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    SUBCASE("shape mismatch is an error") {
        CHECK_THROWS(vae.reparam_sample(latent, Tensor<double>::zeros({3, 2})));
    }
}

TEST_CASE("decode expands teacher durations to the frame level") {
    Rng rng(100);
    Vae<float> vae(tiny_config(), rng);
    auto z = Tensor<float>::randn({2, 4}, rng);
    std::vector<int> teacher = {2, 3};
    auto out = vae.decode(z, &teacher);
    CHECK(out.frames.rows() == 5);
    CHECK(out.frames.cols() == 7);  // d_ling + 3
    CHECK(out.log_dur.rows() == 2);
    CHECK(out.f0.rows() == 2);
    CHECK(out.durations_used == teacher);
}

TEST_CASE("inference duration rounding: round half up with floor one") {
    CHECK(Vae<float>::round_durations({0.4, 2.6}) == std::vector<int>{1, 3});
    CHECK(Vae<float>::round_durations({0.5, 1.5}) == std::vector<int>{1, 2});
    CHECK_THROWS(Vae<float>::round_durations({0.2, 0.3}));  // all zero after rounding
}

TEST_CASE("vae loss components") {
    Rng rng(100);
    Rng data_rng(8);
    auto target = tiny_features(5, 4, data_rng);
    std::vector<int> durations = {2, 3};

    VaeOutputs<float> out;
    auto stacked = target.stacked();
    out.frames = Tensor<float>::from({5, 7}, stacked);
    out.log_dur = Tensor<float>::from({2, 1}, {std::log(2.0f), std::log(3.0f)});
    auto f0t = phoneme_f0_targets(target, durations);
    out.f0 = Tensor<float>::from({2, 1}, f0t);
    out.durations_used = durations;

    PhonemeLatent<float> latent;
    latent.mean = Tensor<float>::zeros({2, 4});
    latent.logvar = Tensor<float>::zeros({2, 4});

    SUBCASE("perfect outputs and unit posterior give zero loss") {
        auto parts = vae_loss(out, target, durations, latent, 0.01, 1.0, 1.0);
        CHECK(parts.recon == 0.0);
        CHECK(parts.dur == 0.0);
        CHECK(parts.f0 == 0.0);
        CHECK(parts.kl == 0.0);
        CHECK(parts.total.item() == 0.0f);
    }
    SUBCASE("KL with mean one and logvar zero is one half per dim") {
        latent.mean = Tensor<float>::filled({2, 4}, 1.0f);
        auto parts = vae_loss(out, target, durations, latent, 0.01, 1.0, 1.0);
        CHECK(parts.kl == doctest::Approx(0.5).epsilon(1e-6));
    }
    SUBCASE("KL is non-negative on random posteriors") {
        Rng r(9);
        for (int trial = 0; trial < 20; ++trial) {
            latent.mean = Tensor<float>::randn({2, 4}, r);
            latent.logvar = Tensor<float>::randn({2, 4}, r);
            auto parts = vae_loss(out, target, durations, latent, 0.01, 1.0, 1.0);
            CHECK(parts.kl >= 0.0);
        }
    }
}

TEST_CASE("adversarial losses") {
    Rng rng(300);
    ModelConfig cfg = tiny_config();
    Discriminator<float> disc(cfg, rng);
    Rng data_rng(4);
    auto real_f = tiny_features(8, 4, data_rng);
    auto fake_f = tiny_features(8, 4, data_rng);
    auto real = frames_tensor<float>(real_f);
    auto fake = frames_tensor<float>(fake_f).set_requires_grad(true);

    SUBCASE("fake equal to real zeroes feature matching") {
        auto fake_same = real.detach();
        auto adv = adversarial_losses(disc, real, fake_same);
        CHECK(adv.fm_loss.item() == 0.0f);
        // g_loss collapses to the real-side term of d_loss
        auto feats = disc.features(real);
        auto ones = Tensor<float>::filled(feats.back().shape(), 1.0f);
        CHECK(adv.g_loss.item() == mse_loss(feats.back(), ones).item());
    }
    SUBCASE("d_loss matches its definition") {
        auto adv = adversarial_losses(disc, real, fake);
        auto dr = disc.features(real).back();
        auto df = disc.features(fake.detach()).back();
        auto ones = Tensor<float>::filled(dr.shape(), 1.0f);
        auto zeros = Tensor<float>::zeros(dr.shape());
        const float expect = mse_loss(dr, ones).item() + mse_loss(df, zeros).item();
        CHECK(adv.d_loss.item() == doctest::Approx(expect).epsilon(1e-6));
        CHECK(adv.d_loss.item() >= 0.0f);
    }
    SUBCASE("g_loss gradient reaches the fake frames but d_loss does not") {
        auto adv = adversarial_losses(disc, real, fake);
        adv.g_loss.backward();
        double g = 0;
        for (double v : fake.grad()) g += std::abs(v);
        CHECK(g > 0.0);

        fake.zero_grad();
        adv.d_loss.backward();
        for (double v : fake.grad()) CHECK(v == 0.0);
    }
    SUBCASE("shape mismatch is an error") {
        auto short_fake = Tensor<float>::zeros({4, 7});
        CHECK_THROWS(adversarial_losses(disc, real, short_fake));
    }
}

TEST_CASE("golden: untrained seeded encode/decode is stable") {
    Rng rng(424242);
    Vae<float> vae(tiny_config(), rng);
    Rng data_rng(11);
    auto ff = tiny_features(7, 4, data_rng);
    PhonemeSeq seq;
    seq.ids = {3, 0, 6};
    seq.word_starts = {0, 1};
    auto latent = vae.encode(seq, ff);
    std::vector<int> teacher = {3, 2, 2};
    auto out = vae.decode(latent.mean, &teacher);

    double mean_sum = 0, frame_sum = 0;
    for (float v : latent.mean.data()) mean_sum += v;
    for (float v : out.frames.data()) frame_sum += v;

    // frozen after the first verified run; reruns must reproduce it
    CHECK(mean_sum == doctest::Approx(-3.70907417).epsilon(1e-6));
    CHECK(frame_sum == doctest::Approx(57.5385674).epsilon(1e-6));

    auto latent2 = vae.encode(seq, ff);
    for (std::size_t i = 0; i < latent.mean.size(); ++i) CHECK(latent.mean[i] == latent2.mean[i]);
}

TEST_CASE("end-to-end vae loss passes finite differences at 64-bit") {
    Rng rng(2718);
    Vae<double> vae(tiny_config(), rng);
    Rng data_rng(3);
    auto target = tiny_features(6, 4, data_rng);
    PhonemeSeq seq;
    seq.ids = {2, 5};
    seq.word_starts = {0};
    std::vector<int> durations = {2, 4};

    auto loss_fn = [&](std::vector<Tensor<double>>&) {
        auto latent = vae.encode(seq, target);
        auto noise = Tensor<double>::zeros(latent.mean.shape());
        auto z = vae.reparam_sample(latent, noise);
        auto out = vae.decode(z, &durations);
        return vae_loss(out, target, durations, latent, 0.01, 1.0, 1.0).total;
    };
    const double err = grad_check<double>(vae.params().tensors(), loss_fn, 1e-5);
    CHECK(err < 1e-3);
}

TEST_CASE("adversarial generator loss passes finite differences at 64-bit") {
    Rng rng(6021);
    ModelConfig cfg = tiny_config();
    Discriminator<double> disc(cfg, rng);
    Rng data_rng(14);
    auto real = frames_tensor<double>(tiny_features(8, 4, data_rng));
    auto fake = frames_tensor<double>(tiny_features(8, 4, data_rng));

    auto loss_fn = [&](std::vector<Tensor<double>>& leaves) {
        auto adv = adversarial_losses(disc, real, leaves[0]);
        return add(adv.g_loss, adv.fm_loss);
    };
    const double err = grad_check<double>({fake}, loss_fn, 1e-5);
    CHECK(err < 1e-3);
}

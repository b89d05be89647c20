#include "pldiff/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "pldiff/aligner.hpp"
#include "pldiff/schedules.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pldiff {

namespace {

constexpr std::uint64_t kVaeInitStream = 0xA1;
constexpr std::uint64_t kVaeTrainStream = 0xA2;
constexpr std::uint64_t kLdmInitStream = 0xB1;
constexpr std::uint64_t kLdmTrainStream = 0xB2;
constexpr std::uint64_t kSynthStream = 0xC1;

Tensor<float> frames_tensor(const FeatureFrames& ff) {
    auto stacked = ff.stacked();
    return Tensor<float>::from({ff.count, ff.feat_dim()}, std::move(stacked));
}

}  // namespace

TrainedVae train_vae(const Dataset& ds, const RunConfig& cfg) {
    if (ds.utterances.empty()) throw std::invalid_argument("train_vae: empty dataset");
    Rng root(cfg.seed);
    Rng init_rng = root.fork(kVaeInitStream);
    Rng train_rng = root.fork(kVaeTrainStream);

    TrainedVae out;
    out.vae = std::make_unique<Vae<float>>(cfg.model, init_rng);
    out.disc = std::make_unique<Discriminator<float>>(cfg.model, init_rng);

    Adam<float> opt_g({.lr = cfg.train.lr});
    Adam<float> opt_d({.lr = cfg.train.lr});
    const int n_utts = static_cast<int>(ds.utterances.size());

    for (int step = 1; step <= cfg.train.vae_steps; ++step) {
        std::vector<int> batch(static_cast<std::size_t>(cfg.train.batch));
        for (auto& b : batch) b = train_rng.uniform_int(0, n_utts - 1);

        VaeStepLog row;
        row.step = step;

        // discriminator phase: fake side detached
        Tensor<float> d_total;
        std::vector<Tensor<float>> fakes, reals;
        std::vector<PhonemeLatent<float>> latents;
        std::vector<VaeOutputs<float>> outputs;
        for (std::size_t bi = 0; bi < batch.size(); ++bi) {
            const Utterance& utt = ds.utterances[static_cast<std::size_t>(batch[bi])];
            auto latent = out.vae->encode(utt.phonemes, utt.features);
            auto noise = Tensor<float>::randn(latent.mean.shape(), train_rng);
            auto z = out.vae->reparam_sample(latent, noise);
            auto dec = out.vae->decode(z, &utt.durations);
            auto real = frames_tensor(utt.features);
            auto adv = adversarial_losses(*out.disc, real, dec.frames);
            d_total = bi == 0 ? adv.d_loss : add(d_total, adv.d_loss);
            latents.push_back(std::move(latent));
            outputs.push_back(std::move(dec));
            reals.push_back(std::move(real));
        }
        d_total = scale(d_total, 1.0 / cfg.train.batch);
        row.d_loss = d_total.item();
        out.disc->params().zero_grads();
        out.vae->params().zero_grads();
        d_total.backward();
        opt_d.step(out.disc->params());

        // generator phase against the updated discriminator
        Tensor<float> g_total;
        for (std::size_t bi = 0; bi < batch.size(); ++bi) {
            const Utterance& utt = ds.utterances[static_cast<std::size_t>(batch[bi])];
            auto parts = vae_loss(outputs[bi], utt.features, utt.durations, latents[bi],
                                  cfg.train.lambda_kl, cfg.train.lambda_dur, cfg.train.lambda_f0);
            auto adv = adversarial_losses(*out.disc, reals[bi], outputs[bi].frames);
            auto utt_loss = add(parts.total, scale(add(adv.g_loss, adv.fm_loss), cfg.train.lambda_adv));
            g_total = bi == 0 ? utt_loss : add(g_total, utt_loss);
            row.recon += parts.recon / cfg.train.batch;
            row.kl += parts.kl / cfg.train.batch;
            row.dur += parts.dur / cfg.train.batch;
            row.f0 += parts.f0 / cfg.train.batch;
            row.g_loss += static_cast<double>(adv.g_loss.item()) / cfg.train.batch;
            row.fm_loss += static_cast<double>(adv.fm_loss.item()) / cfg.train.batch;
        }
        g_total = scale(g_total, 1.0 / cfg.train.batch);
        row.total = g_total.item();
        out.vae->params().zero_grads();
        out.disc->params().zero_grads();
        g_total.backward();
        opt_g.step(out.vae->params());

        out.log.push_back(row);
    }
    return out;
}

TrainedLdm train_ldm(const Dataset& ds, const Vae<float>& vae, const RunConfig& cfg) {
    if (ds.utterances.empty()) throw std::invalid_argument("train_ldm: empty dataset");
    Rng root(cfg.seed);
    Rng init_rng = root.fork(kLdmInitStream);
    Rng train_rng = root.fork(kLdmTrainStream);

    TrainedLdm out;
    out.denoiser = std::make_unique<Denoiser<float>>(cfg.model, init_rng);
    out.conditioners = std::make_unique<Conditioners<float>>(cfg.model, init_rng);

    auto sched = linear_beta_schedule(cfg.schedule.steps, cfg.schedule.beta1, cfg.schedule.betaT);
    Adam<float> opt_den({.lr = cfg.train.lr});
    Adam<float> opt_cond({.lr = cfg.train.lr});
    const int n_utts = static_cast<int>(ds.utterances.size());

    // same-speaker utterance lists for reference sampling
    std::vector<std::vector<int>> by_speaker(ds.speakers.size());
    for (int u = 0; u < n_utts; ++u)
        by_speaker[static_cast<std::size_t>(ds.utterances[static_cast<std::size_t>(u)].speaker)].push_back(u);

    for (int step = 1; step <= cfg.train.ldm_steps; ++step) {
        Tensor<float> total;
        for (int bi = 0; bi < cfg.train.batch; ++bi) {
            const int ui = train_rng.uniform_int(0, n_utts - 1);
            const Utterance& utt = ds.utterances[static_cast<std::size_t>(ui)];

            // posterior mean from the frozen VAE, cut from the tape
            auto latent = vae.encode(utt.phonemes, utt.features);
            const std::vector<float> mu = latent.mean.data();
            const int p_count = latent.mean.rows();

            const auto& pool = by_speaker[static_cast<std::size_t>(utt.speaker)];
            const int ref_idx = pool[static_cast<std::size_t>(train_rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
            auto ref = corrupt_reference(ds.utterances[static_cast<std::size_t>(ref_idx)].features,
                                         train_rng, cfg.train.ref_noise_sigma, cfg.train.ref_crop_min);

            auto [null_text, null_spk] = condition_dropout(train_rng, cfg.train.drop_text,
                                                           cfg.train.drop_spk, cfg.train.drop_both);
            auto cond = out.conditioners->build(utt.phonemes, &ref, cfg.seed, null_text, null_spk);

            const int t = train_rng.uniform_int(1, sched.steps);
            std::vector<float> eps(mu.size());
            for (auto& e : eps) e = static_cast<float>(train_rng.normal());

            auto loss = ldm_loss(*out.denoiser, mu, p_count, cond, sched, t, eps);
            total = bi == 0 ? loss : add(total, loss);
        }
        total = scale(total, 1.0 / cfg.train.batch);

        out.denoiser->params().zero_grads();
        out.conditioners->params().zero_grads();
        total.backward();
        opt_den.step(out.denoiser->params());
        opt_cond.step(out.conditioners->params());

        out.log.push_back({step, static_cast<double>(total.item())});
    }
    return out;
}

void write_vae_log_csv(const std::vector<VaeStepLog>& log, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "step,recon,kl,dur,f0,d_loss,g_loss,fm_loss,total\n";
    f.precision(10);
    for (const auto& r : log)
        f << r.step << ',' << r.recon << ',' << r.kl << ',' << r.dur << ',' << r.f0 << ','
          << r.d_loss << ',' << r.g_loss << ',' << r.fm_loss << ',' << r.total << '\n';
}

void write_ldm_log_csv(const std::vector<LdmStepLog>& log, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "step,loss\n";
    f.precision(10);
    for (const auto& r : log) f << r.step << ',' << r.loss << '\n';
}

SynthResult synthesize(const Vae<float>& vae, const Denoiser<float>& denoiser,
                       const Conditioners<float>& cond, const PhonemeSeq& text,
                       const FeatureFrames& reference, const RunConfig& cfg, GuidanceWeights w,
                       SamplerMode mode, Rng& rng, bool want_trace) {
    auto sched = linear_beta_schedule(cfg.schedule.steps, cfg.schedule.beta1, cfg.schedule.betaT);
    auto fast = fast_sampling_plan(
        cfg.schedule.fast_schedule.empty() ? default_fast_schedule() : cfg.schedule.fast_schedule, sched);

    auto full_set = cond.build(text, &reference, cfg.seed, false, false);
    auto spk_only = cond.build(text, &reference, cfg.seed, true, false);
    auto text_only = cond.build(text, nullptr, cfg.seed, false, true);
    auto null_set = cond.build(text, nullptr, cfg.seed, true, true);
    auto eps_fn = make_denoiser_eps_fn(denoiser, full_set, spk_only, text_only, null_set);

    SynthResult result;
    result.p_count = text.length();

    const auto start = std::chrono::steady_clock::now();
    result.latent = sample_latent(eps_fn, text.length(), cfg.model.d_z, sched,
                                  mode == SamplerMode::Fast ? &fast : nullptr, w, mode, rng,
                                  want_trace ? &result.trace : nullptr);
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    auto z = Tensor<float>::from({text.length(), cfg.model.d_z}, result.latent);
    auto dec = vae.decode(z, nullptr);
    result.durations = dec.durations_used;
    result.frames = dec.frames.data();
    result.frame_count = dec.frames.rows();
    return result;
}

void write_synth_result(const SynthResult& result, const std::string& dir) {
    fs::create_directories(dir);
    const int d_z = static_cast<int>(result.latent.size()) / result.p_count;
    const int feat = static_cast<int>(result.frames.size()) / std::max(1, result.frame_count);

    json manifest;
    manifest["format"] = "pldiff-dataset-v1";
    manifest["blob"] = "synth.f32";
    std::vector<float> blob;
    json arrays = json::array();
    auto push = [&](const std::string& name, const std::vector<float>& data, std::vector<int> shape) {
        json a;
        a["name"] = name;
        a["shape"] = shape;
        a["elements"] = data.size();
        a["offset"] = blob.size() * sizeof(float);
        a["crc32"] = crc32(data.data(), data.size() * sizeof(float));
        arrays.push_back(a);
        blob.insert(blob.end(), data.begin(), data.end());
    };
    push("latent", result.latent, {result.p_count, d_z});
    push("frames", result.frames, {result.frame_count, feat});
    manifest["arrays"] = arrays;
    manifest["durations"] = result.durations;
    manifest["timing"] = {{"sample_wall_seconds", result.wall_seconds}};

    std::ofstream mf(fs::path(dir) / "synth.json");
    if (!mf) throw std::runtime_error("cannot write synth.json in " + dir);
    mf << manifest.dump(2) << '\n';
    write_f32_blob((fs::path(dir) / "synth.f32").string(), blob);

    if (!result.trace.t.empty()) {
        std::ofstream tf(fs::path(dir) / "sampler_trace.csv");
        tf << "t,eps_norm\n";
        tf.precision(10);
        for (std::size_t i = 0; i < result.trace.t.size(); ++i)
            tf << result.trace.t[i] << ',' << result.trace.eps_norm[i] << '\n';
    }
}

double speaker_separation_ratio(const Dataset& ds, const Conditioners<float>& cond,
                                const RunConfig& cfg, int pairs, std::uint64_t seed) {
    if (ds.speakers.size() < 2) throw std::invalid_argument("speaker_separation_ratio: need >= 2 speakers");
    Rng rng(seed);
    std::vector<std::vector<int>> by_speaker(ds.speakers.size());
    for (std::size_t u = 0; u < ds.utterances.size(); ++u)
        by_speaker[static_cast<std::size_t>(ds.utterances[u].speaker)].push_back(static_cast<int>(u));

    // probe text fixed across all pairs so distance reflects the reference
    const PhonemeSeq& probe = ds.utterances[0].phonemes;
    auto ctx = cond.context_features(probe, cfg.seed);

    auto c_spk_of = [&](int utt) {
        return cond.reference_condition(ds.utterances[static_cast<std::size_t>(utt)].features, ctx);
    };
    auto distance = [](const Tensor<float>& a, const Tensor<float>& b) {
        double s = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = static_cast<double>(a[i]) - b[i];
            s += d * d;
        }
        return std::sqrt(s / static_cast<double>(a.size()));
    };

    double same_sum = 0, diff_sum = 0;
    for (int k = 0; k < pairs; ++k) {
        // same-speaker pair
        int spk = rng.uniform_int(0, static_cast<int>(ds.speakers.size()) - 1);
        while (by_speaker[static_cast<std::size_t>(spk)].size() < 2)
            spk = rng.uniform_int(0, static_cast<int>(ds.speakers.size()) - 1);
        const auto& pool = by_speaker[static_cast<std::size_t>(spk)];
        const int a = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
        int b = a;
        while (b == a) b = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
        same_sum += distance(c_spk_of(a), c_spk_of(b));

        // different-speaker pair
        int spk2 = spk;
        while (spk2 == spk) spk2 = rng.uniform_int(0, static_cast<int>(ds.speakers.size()) - 1);
        const auto& pool2 = by_speaker[static_cast<std::size_t>(spk2)];
        const int c = pool2[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool2.size()) - 1))];
        diff_sum += distance(c_spk_of(a), c_spk_of(c));
    }
    return same_sum / diff_sum;
}

std::string EvalReport::to_json() const {
    json j;
    j["vae_recon_l1"] = vae_recon_l1;
    j["aligner_duration_accuracy"] = aligner_duration_accuracy;
    j["speaker_separation_ratio"] = speaker_separation_ratio;
    j["full_fast_mean_shift"] = full_fast_mean_shift;
    j["full_fast_samples"] = full_fast_samples;
    return j.dump(2);
}

EvalReport evaluate(const Dataset& ds, const Vae<float>& vae, const Denoiser<float>& denoiser,
                    const Conditioners<float>& cond, const RunConfig& cfg, int sampler_stat_samples) {
    EvalReport rep;

    // reconstruction with teacher durations
    double recon_sum = 0;
    for (const auto& utt : ds.utterances) {
        auto latent = vae.encode(utt.phonemes, utt.features);
        auto dec = vae.decode(latent.mean, &utt.durations);
        auto real = frames_tensor(utt.features);
        recon_sum += static_cast<double>(l1_loss(dec.frames, real).item());
        if (dec.frames.rows() != utt.frame_count())
            throw std::runtime_error("evaluate: teacher-duration frame count mismatch");
    }
    rep.vae_recon_l1 = recon_sum / static_cast<double>(ds.utterances.size());

    // aligner accuracy against generator ground truth
    int total = 0, exact = 0;
    for (std::size_t u = 0; u < ds.utterances.size(); ++u) {
        const auto& utt = ds.utterances[u];
        std::vector<double> means, vars;
        ds.phoneme_stats(static_cast<int>(u), means, vars);
        std::vector<double> frames(utt.features.linguistic.begin(), utt.features.linguistic.end());
        auto ll = likelihood_matrix(means, vars, utt.phonemes.length(), frames, utt.frame_count(),
                                    ds.params.d_ling);
        auto dur = durations_from_path(mas(ll));
        for (std::size_t i = 0; i < dur.size(); ++i) {
            ++total;
            exact += dur[i] == utt.durations[i] ? 1 : 0;
        }
    }
    rep.aligner_duration_accuracy = static_cast<double>(exact) / total;

    rep.speaker_separation_ratio = speaker_separation_ratio(ds, cond, cfg, 50, cfg.seed ^ 0x5E9);

    // full-vs-fast latent statistics on a fixed text and reference
    if (sampler_stat_samples > 0) {
        const PhonemeSeq& text = ds.utterances[0].phonemes;
        const FeatureFrames& ref = ds.utterances[1 % ds.utterances.size()].features;
        const std::size_t n = static_cast<std::size_t>(text.length()) * cfg.model.d_z;
        std::vector<double> mean_full(n, 0.0), mean_fast(n, 0.0), m2_full(n, 0.0);

        auto sched = linear_beta_schedule(cfg.schedule.steps, cfg.schedule.beta1, cfg.schedule.betaT);
        auto plan = fast_sampling_plan(
            cfg.schedule.fast_schedule.empty() ? default_fast_schedule() : cfg.schedule.fast_schedule,
            sched);
        auto full_set = cond.build(text, &ref, cfg.seed, false, false);
        auto spk_only = cond.build(text, &ref, cfg.seed, true, false);
        auto text_only = cond.build(text, nullptr, cfg.seed, false, true);
        auto null_set = cond.build(text, nullptr, cfg.seed, true, true);
        auto eps_fn = make_denoiser_eps_fn(denoiser, full_set, spk_only, text_only, null_set);

        Rng rng = Rng(cfg.seed).fork(kSynthStream);
        GuidanceWeights w{cfg.w_text, cfg.w_spk};
        for (int i = 0; i < sampler_stat_samples; ++i) {
            auto zf = sample_latent(eps_fn, text.length(), cfg.model.d_z, sched, nullptr, w,
                                    SamplerMode::Full, rng);
            auto zq = sample_latent(eps_fn, text.length(), cfg.model.d_z, sched, &plan, w,
                                    SamplerMode::Fast, rng);
            for (std::size_t k = 0; k < n; ++k) {
                mean_full[k] += zf[k];
                m2_full[k] += static_cast<double>(zf[k]) * zf[k];
                mean_fast[k] += zq[k];
            }
        }
        double worst = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const double mf = mean_full[k] / sampler_stat_samples;
            const double mq = mean_fast[k] / sampler_stat_samples;
            const double var = std::max(1e-12, m2_full[k] / sampler_stat_samples - mf * mf);
            worst = std::max(worst, std::abs(mf - mq) / std::sqrt(var));
        }
        rep.full_fast_mean_shift = worst;
        rep.full_fast_samples = sampler_stat_samples;
    }
    return rep;
}

}  // namespace pldiff

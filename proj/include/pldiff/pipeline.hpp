#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pldiff/config.hpp"
#include "pldiff/ldm.hpp"
#include "pldiff/synthdata.hpp"
#include "pldiff/vae.hpp"

namespace pldiff {

struct VaeStepLog {
    int step = 0;
    double recon = 0, kl = 0, dur = 0, f0 = 0;
    double d_loss = 0, g_loss = 0, fm_loss = 0;
    double total = 0;  // recon + weighted components + adversarial share
};

struct TrainedVae {
    std::unique_ptr<Vae<float>> vae;
    std::unique_ptr<Discriminator<float>> disc;
    std::vector<VaeStepLog> log;
};

struct LdmStepLog {
    int step = 0;
    double loss = 0;
};

struct TrainedLdm {
    std::unique_ptr<Denoiser<float>> denoiser;
    std::unique_ptr<Conditioners<float>> conditioners;
    std::vector<LdmStepLog> log;
};

TrainedVae train_vae(const Dataset& ds, const RunConfig& cfg);
TrainedLdm train_ldm(const Dataset& ds, const Vae<float>& vae, const RunConfig& cfg);

void write_vae_log_csv(const std::vector<VaeStepLog>& log, const std::string& path);
void write_ldm_log_csv(const std::vector<LdmStepLog>& log, const std::string& path);

struct SynthResult {
    std::vector<float> latent;       // P x d_z
    int p_count = 0;
    std::vector<int> durations;      // predicted, after rounding
    std::vector<float> frames;       // F x feat_dim decoded features
    int frame_count = 0;
    double wall_seconds = 0;         // sample_latent only
    SampleTrace trace;
};

// Builds the four condition variants once, samples a latent with dual CFG,
// then decodes it with predicted durations.
SynthResult synthesize(const Vae<float>& vae, const Denoiser<float>& denoiser,
                       const Conditioners<float>& cond, const PhonemeSeq& text,
                       const FeatureFrames& reference, const RunConfig& cfg, GuidanceWeights w,
                       SamplerMode mode, Rng& rng, bool want_trace = false);

void write_synth_result(const SynthResult& result, const std::string& dir);

struct EvalReport {
    double vae_recon_l1 = 0;
    double aligner_duration_accuracy = 0;
    double speaker_separation_ratio = 0;   // same-speaker / different-speaker c_spk distance
    double full_fast_mean_shift = 0;       // per-dim mean gap, units of full-mode std
    int full_fast_samples = 0;
    std::string to_json() const;
};

EvalReport evaluate(const Dataset& ds, const Vae<float>& vae, const Denoiser<float>& denoiser,
                    const Conditioners<float>& cond, const RunConfig& cfg, int sampler_stat_samples);

// c_spk separation on seeded same/different speaker reference pairs;
// returns mean_same / mean_different.
double speaker_separation_ratio(const Dataset& ds, const Conditioners<float>& cond,
                                const RunConfig& cfg, int pairs, std::uint64_t seed);

}  // namespace pldiff

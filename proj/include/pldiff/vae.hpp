#pragma once

#include <optional>
#include <vector>

#include "pldiff/config.hpp"
#include "pldiff/nn.hpp"
#include "pldiff/synthdata.hpp"

namespace pldiff {

// Per-phoneme posterior; the mean is what the latent diffusion model learns
// to generate.
template <typename T>
struct PhonemeLatent {
    Tensor<T> mean;    // P x d_z
    Tensor<T> logvar;  // P x d_z, clamped to [-10, 10]
};

template <typename T>
struct VaeOutputs {
    Tensor<T> frames;   // F x feat_dim reconstruction
    Tensor<T> log_dur;  // P x 1 predicted log-durations
    Tensor<T> f0;       // P x 1 predicted phoneme-level f0
    std::vector<int> durations_used;
};

// Phoneme-level VAE: a phoneme encoder feeds a cross-attention bottleneck
// over the stacked feature channels; the decoder splits into duration,
// phoneme f0 and upsampling branches and ends in a frame decoder.
template <typename T>
class Vae {
public:
    Vae(const ModelConfig& cfg, Rng& rng);

    Tensor<T> phoneme_encode(const PhonemeSeq& seq) const;
    PhonemeLatent<T> encode(const PhonemeSeq& seq, const FeatureFrames& features) const;
    Tensor<T> reparam_sample(const PhonemeLatent<T>& latent, const Tensor<T>& noise) const;
    VaeOutputs<T> decode(const Tensor<T>& z, const std::vector<int>* teacher_durations) const;

    ParamStore<T>& params() { return ps_; }
    const ParamStore<T>& params() const { return ps_; }
    const ModelConfig& config() const { return cfg_; }

    // inference rounding rule: round half up, floor at one frame, capped so a
    // wild prediction cannot blow up the upsampler
    static std::vector<int> round_durations(const std::vector<double>& dur_linear, int max_frames = 100);

private:
    ModelConfig cfg_;
    ParamStore<T> ps_;
    Tensor<T> phone_embed_;
    std::vector<TransformerLayer<T>> encoder_;
    Linear<T> feat_proj_;
    TransformerLayer<T> bottleneck_;
    Linear<T> head_mean_, head_logvar_;
    Linear<T> z_proj_;
    std::vector<TransformerLayer<T>> latent_decoder_;
    Mlp2<T> dur_head_, f0_head_;
    TransformerLayer<T> upsampler_;
    std::vector<TransformerLayer<T>> frame_decoder_;
    Linear<T> out_head_;
};

template <typename T>
struct VaeLossParts {
    Tensor<T> total;
    double recon = 0, kl = 0, dur = 0, f0 = 0;
};

// recon: L1 over all feature channels; duration: MSE in the log domain;
// f0: L1 against the per-phoneme mean of the target f0_norm; KL against a
// standard normal, averaged over phonemes and latent dims.
template <typename T>
VaeLossParts<T> vae_loss(const VaeOutputs<T>& out, const FeatureFrames& target,
                         const std::vector<int>& target_durations, const PhonemeLatent<T>& latent,
                         double lambda_kl, double lambda_dur, double lambda_f0);

// target phoneme-level f0: mean of f0_norm over each phoneme's frames
std::vector<float> phoneme_f0_targets(const FeatureFrames& features, const std::vector<int>& durations);

// Least-squares GAN discriminator: a small strided 1-D conv stack over the
// frame axis.
template <typename T>
class Discriminator {
public:
    Discriminator(const ModelConfig& cfg, Rng& rng);

    // intermediate activations plus the final score map
    std::vector<Tensor<T>> features(const Tensor<T>& frames) const;
    ParamStore<T>& params() { return ps_; }

private:
    ParamStore<T> ps_;
    Tensor<T> w1_, b1_, w2_, b2_, w3_, b3_, w4_, b4_;
};

template <typename T>
struct AdvLosses {
    Tensor<T> d_loss;   // trains the discriminator; generator side detached
    Tensor<T> g_loss;   // least-squares generator loss
    Tensor<T> fm_loss;  // feature matching, real side detached
};

template <typename T>
AdvLosses<T> adversarial_losses(const Discriminator<T>& disc, const Tensor<T>& real_frames,
                                const Tensor<T>& fake_frames);

}  // namespace pldiff

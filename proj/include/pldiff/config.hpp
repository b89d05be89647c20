#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pldiff/synthdata.hpp"

namespace pldiff {

struct ModelConfig {
    int d_ling = 8;
    int vocab = 64;
    int d_z = 8;
    int d_cond = 32;

    int vae_width = 32;
    int vae_layers = 2;
    int vae_heads = 4;
    int ff_mult = 2;

    int denoiser_width = 64;
    int denoiser_layers = 4;
    int denoiser_heads = 4;

    int prototypes = 60;
    int text_head_layers = 1;

    int disc_channels = 16;
    int disc_kernel = 5;

    int max_positions = 1024;

    int feat_dim() const { return d_ling + 3; }
};

struct TrainConfig {
    double lr = 3e-4;
    int vae_steps = 500;
    int ldm_steps = 1000;
    int batch = 2;
    double lambda_kl = 0.01;
    double lambda_dur = 1.0;
    double lambda_f0 = 1.0;
    double lambda_adv = 0.1;
    double drop_text = 0.05;
    double drop_spk = 0.10;
    double drop_both = 0.10;
    double ref_noise_sigma = 0.05;
    double ref_crop_min = 0.5;
};

struct ScheduleConfig {
    int steps = 200;
    double beta1 = 1e-4;
    double betaT = 0.03;
    std::vector<double> fast_schedule;  // empty -> built-in 16-step schedule
};

struct RunConfig {
    std::uint64_t seed = 1;
    CorpusParams corpus;
    ModelConfig model;
    TrainConfig train;
    ScheduleConfig schedule;
    double w_text = 1.0;
    double w_spk = 1.0;
    std::string sampler_mode = "fast";  // "full" or "fast"

    std::string to_json() const;        // canonical mirror for archival
    std::uint64_t config_hash() const;  // FNV-1a of the canonical mirror
};

void validate(const RunConfig& cfg);

}  // namespace pldiff

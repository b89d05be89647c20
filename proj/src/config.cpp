#include "pldiff/config.hpp"

#include <stdexcept>

#include <json.hpp>

#include "pldiff/schedules.hpp"

using nlohmann::json;

namespace pldiff {

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["corpus"] = {{"seed", corpus.seed},
                   {"n_speakers", corpus.n_speakers},
                   {"utts_per_speaker", corpus.utts_per_speaker},
                   {"phoneme_len_min", corpus.phoneme_len_min},
                   {"phoneme_len_max", corpus.phoneme_len_max},
                   {"jitter", corpus.jitter},
                   {"vocab", corpus.vocab},
                   {"d_ling", corpus.d_ling}};
    j["model"] = {{"d_ling", model.d_ling},
                  {"vocab", model.vocab},
                  {"d_z", model.d_z},
                  {"d_cond", model.d_cond},
                  {"vae_width", model.vae_width},
                  {"vae_layers", model.vae_layers},
                  {"vae_heads", model.vae_heads},
                  {"ff_mult", model.ff_mult},
                  {"denoiser_width", model.denoiser_width},
                  {"denoiser_layers", model.denoiser_layers},
                  {"denoiser_heads", model.denoiser_heads},
                  {"prototypes", model.prototypes},
                  {"text_head_layers", model.text_head_layers},
                  {"disc_channels", model.disc_channels},
                  {"disc_kernel", model.disc_kernel},
                  {"max_positions", model.max_positions}};
    j["train"] = {{"lr", train.lr},
                  {"vae_steps", train.vae_steps},
                  {"ldm_steps", train.ldm_steps},
                  {"batch", train.batch},
                  {"lambda_kl", train.lambda_kl},
                  {"lambda_dur", train.lambda_dur},
                  {"lambda_f0", train.lambda_f0},
                  {"lambda_adv", train.lambda_adv},
                  {"drop_text", train.drop_text},
                  {"drop_spk", train.drop_spk},
                  {"drop_both", train.drop_both},
                  {"ref_noise_sigma", train.ref_noise_sigma},
                  {"ref_crop_min", train.ref_crop_min}};
    j["schedule"] = {{"steps", schedule.steps},
                     {"beta1", schedule.beta1},
                     {"betaT", schedule.betaT},
                     {"fast_schedule", schedule.fast_schedule.empty() ? default_fast_schedule()
                                                                      : schedule.fast_schedule}};
    j["w_text"] = w_text;
    j["w_spk"] = w_spk;
    j["sampler_mode"] = sampler_mode;
    return j.dump(2);
}

std::uint64_t RunConfig::config_hash() const {
    const std::string s = to_json();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void validate(const RunConfig& cfg) {
    if (cfg.corpus.n_speakers < 1 || cfg.corpus.utts_per_speaker < 1)
        throw std::invalid_argument("config: corpus counts must be >= 1");
    if (cfg.corpus.phoneme_len_min < 1 || cfg.corpus.phoneme_len_max < cfg.corpus.phoneme_len_min)
        throw std::invalid_argument("config: bad phoneme length range");
    if (cfg.corpus.d_ling != cfg.model.d_ling || cfg.corpus.vocab != cfg.model.vocab)
        throw std::invalid_argument("config: corpus and model dimensions disagree");
    if (cfg.model.vae_width % cfg.model.vae_heads != 0 ||
        cfg.model.denoiser_width % cfg.model.denoiser_heads != 0)
        throw std::invalid_argument("config: width must be divisible by heads");
    if (cfg.model.d_cond % cfg.model.vae_heads != 0)
        throw std::invalid_argument("config: d_cond must be divisible by heads");
    if (cfg.schedule.steps < 2 || !(0.0 < cfg.schedule.beta1 && cfg.schedule.beta1 < cfg.schedule.betaT &&
                                    cfg.schedule.betaT < 1.0))
        throw std::invalid_argument("config: bad schedule parameters");
    for (double b : cfg.schedule.fast_schedule)
        if (!(0.0 < b && b < 1.0)) throw std::invalid_argument("config: fast schedule beta out of (0,1)");
    if (!(cfg.train.drop_text >= 0 && cfg.train.drop_text <= 1 && cfg.train.drop_spk >= 0 &&
          cfg.train.drop_spk <= 1 && cfg.train.drop_both >= 0 && cfg.train.drop_both <= 1))
        throw std::invalid_argument("config: dropout probabilities out of [0,1]");
    if (cfg.sampler_mode != "full" && cfg.sampler_mode != "fast")
        throw std::invalid_argument("config: sampler_mode must be 'full' or 'fast'");
    if (cfg.train.batch < 1 || cfg.train.vae_steps < 1 || cfg.train.ldm_steps < 1)
        throw std::invalid_argument("config: training counts must be >= 1");
}

}  // namespace pldiff

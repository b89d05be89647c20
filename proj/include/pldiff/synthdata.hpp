#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pldiff {

// Procedural pseudo-feature corpus. Everything is a pure function of the
// seed: per-speaker and per-utterance streams are forked from it, so the
// corpus is bit-identical across runs regardless of generation order.

struct CorpusParams {
    std::uint64_t seed = 1;
    int n_speakers = 2;
    int utts_per_speaker = 3;
    int phoneme_len_min = 6;
    int phoneme_len_max = 12;
    double jitter = 0.05;
    double speaker_offset_scale = 0.25;
    int vocab = 64;
    int d_ling = 8;
};

struct PhonemeSeq {
    std::vector<int> ids;
    std::vector<int> word_starts;  // sorted, first element always 0

    int length() const { return static_cast<int>(ids.size()); }
    int words() const { return static_cast<int>(word_starts.size()); }
};

struct FeatureFrames {
    int count = 0;
    int d_ling = 0;
    std::vector<float> linguistic;     // count x d_ling
    std::vector<float> f0_norm;        // exactly 0 on unvoiced frames
    std::vector<float> amp_periodic;   // >= 0
    std::vector<float> amp_aperiodic;  // >= 0

    int feat_dim() const { return d_ling + 3; }
    // count x (d_ling + 3): linguistic | f0 | amp_p | amp_a
    std::vector<float> stacked() const;
};

struct SpeakerProfile {
    std::uint64_t seed = 0;
    double base_f0_hz = 200.0;
    double rate = 1.0;
    double amp_gain = 1.0;
    std::vector<float> ling_offset;  // vocab x d_ling
};

struct Utterance {
    int speaker = 0;
    PhonemeSeq phonemes;
    std::vector<int> durations;  // ground truth, one per phoneme
    FeatureFrames features;

    int frame_count() const { return features.count; }
};

struct Dataset {
    CorpusParams params;
    std::vector<float> phoneme_embed;  // vocab x d_ling class anchors
    std::vector<SpeakerProfile> speakers;
    std::vector<Utterance> utterances;

    // aligner-side ground truth: mean/vars of the linguistic frames of
    // utterance u under the generator's own model
    void phoneme_stats(int utt, std::vector<double>& means, std::vector<double>& vars) const;
};

// f0 in Hz to MIDI scale divided by 84; 0 is the unvoiced sentinel.
double midi_normalize(double f0_hz);

bool phoneme_is_voiced(int id);

Dataset gen_corpus(const CorpusParams& params);

void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

// Shared blob helpers (dataset, checkpoints, exported latents).
std::uint32_t crc32(const void* data, std::size_t len);
void write_f32_blob(const std::string& path, const std::vector<float>& data);

}  // namespace pldiff

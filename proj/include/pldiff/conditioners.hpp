#pragma once

#include <cstdint>
#include <vector>

#include "pldiff/config.hpp"
#include "pldiff/nn.hpp"
#include "pldiff/synthdata.hpp"

namespace pldiff {

// Phoneme-wise condition streams for the denoiser. A set null flag means
// the corresponding tensor is exactly zero.
template <typename T>
struct ConditionSet {
    Tensor<T> c_text;  // P x d_cond
    Tensor<T> c_spk;   // P x d_cond
    bool null_text = false;
    bool null_spk = false;
};

// Deterministic hashed stand-in for a pretrained text encoder: every word
// (its phoneme-id tuple) maps to a fixed pseudo-random unit vector.
template <typename T>
Tensor<T> context_embed(const PhonemeSeq& seq, std::uint64_t seed, int dim);

// Additive noise plus a contiguous random crop of the reference features.
// f0 of unvoiced frames keeps its exact-zero sentinel; amplitudes stay >= 0.
FeatureFrames corrupt_reference(const FeatureFrames& features, Rng& rng, double sigma = 0.05,
                                double crop_min = 0.5);

// Text and reference conditioners plus their shared context encoder.
// The text path never sees reference features by construction.
template <typename T>
class Conditioners {
public:
    Conditioners(const ModelConfig& cfg, Rng& rng);

    // phoneme encoder output cross-attended with hashed word embeddings
    Tensor<T> context_features(const PhonemeSeq& seq, std::uint64_t embed_seed) const;
    Tensor<T> text_condition(const Tensor<T>& context_feats) const;
    // fixed-length speaker tokens from prototype cross-attention
    Tensor<T> speaker_tokens(const FeatureFrames& reference) const;
    Tensor<T> reference_condition(const FeatureFrames& reference, const Tensor<T>& context_feats) const;

    ConditionSet<T> build(const PhonemeSeq& seq, const FeatureFrames* reference,
                          std::uint64_t embed_seed, bool null_text, bool null_spk) const;

    ParamStore<T>& params() { return ps_; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    ParamStore<T> ps_;
    Tensor<T> phone_embed_;
    std::vector<TransformerLayer<T>> encoder_;
    Linear<T> word_proj_;
    TransformerLayer<T> context_cross_;
    std::vector<TransformerLayer<T>> text_head_;
    Linear<T> text_out_;
    Tensor<T> prototypes_;
    Linear<T> ref_proj_;
    TransformerLayer<T> retriever_cross_;
    TransformerLayer<T> retriever_self_;
    TransformerLayer<T> ref_cross_;
    Linear<T> ref_out_;
};

}  // namespace pldiff

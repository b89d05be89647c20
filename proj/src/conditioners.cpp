#include "pldiff/conditioners.hpp"

#include <cmath>
#include <stdexcept>

namespace pldiff {

namespace {

std::uint64_t fnv1a(std::uint64_t seed, const int* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    const auto mix_byte = [&h](unsigned char b) {
        h ^= b;
        h *= 0x100000001b3ULL;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = static_cast<std::uint32_t>(data[i]);
        mix_byte(static_cast<unsigned char>(x & 0xFF));
        mix_byte(static_cast<unsigned char>((x >> 8) & 0xFF));
        mix_byte(static_cast<unsigned char>((x >> 16) & 0xFF));
        mix_byte(static_cast<unsigned char>((x >> 24) & 0xFF));
    }
    return h;
}

}  // namespace

template <typename T>
Tensor<T> context_embed(const PhonemeSeq& seq, std::uint64_t seed, int dim) {
    if (seq.word_starts.empty() || seq.ids.empty())
        throw std::invalid_argument("context_embed: empty sequence");
    const int words = seq.words();
    Tensor<T> out = Tensor<T>::raw({words, dim});
    for (int w = 0; w < words; ++w) {
        const int start = seq.word_starts[static_cast<std::size_t>(w)];
        const int end = w + 1 < words ? seq.word_starts[static_cast<std::size_t>(w + 1)] : seq.length();
        if (start < 0 || end <= start || end > seq.length())
            throw std::invalid_argument("context_embed: bad word boundaries");
        Rng r(fnv1a(seed, seq.ids.data() + start, static_cast<std::size_t>(end - start)));
        double norm2 = 0.0;
        std::vector<double> v(static_cast<std::size_t>(dim));
        for (auto& x : v) {
            x = r.normal();
            norm2 += x * x;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (int c = 0; c < dim; ++c)
            out.data()[static_cast<std::size_t>(w) * dim + c] = static_cast<T>(v[static_cast<std::size_t>(c)] * inv);
    }
    return out;
}

FeatureFrames corrupt_reference(const FeatureFrames& features, Rng& rng, double sigma, double crop_min) {
    if (features.count < 4) throw std::invalid_argument("corrupt_reference: need at least 4 frames");
    const int f_total = features.count;
    const int min_len = static_cast<int>(std::ceil(crop_min * f_total));
    const int len = rng.uniform_int(min_len, f_total);
    const int start = rng.uniform_int(0, f_total - len);

    FeatureFrames out;
    out.count = len;
    out.d_ling = features.d_ling;
    out.linguistic.resize(static_cast<std::size_t>(len) * features.d_ling);
    out.f0_norm.resize(static_cast<std::size_t>(len));
    out.amp_periodic.resize(static_cast<std::size_t>(len));
    out.amp_aperiodic.resize(static_cast<std::size_t>(len));
    for (int f = 0; f < len; ++f) {
        const int src = start + f;
        for (int c = 0; c < features.d_ling; ++c)
            out.linguistic[static_cast<std::size_t>(f) * features.d_ling + c] =
                features.linguistic[static_cast<std::size_t>(src) * features.d_ling + c] +
                static_cast<float>(rng.normal() * sigma);
        const float f0 = features.f0_norm[static_cast<std::size_t>(src)];
        // unvoiced frames keep the exact-zero sentinel
        out.f0_norm[static_cast<std::size_t>(f)] =
            f0 == 0.0f ? 0.0f : f0 + static_cast<float>(rng.normal() * sigma);
        out.amp_periodic[static_cast<std::size_t>(f)] = std::max(
            0.0f, features.amp_periodic[static_cast<std::size_t>(src)] + static_cast<float>(rng.normal() * sigma));
        out.amp_aperiodic[static_cast<std::size_t>(f)] = std::max(
            0.0f, features.amp_aperiodic[static_cast<std::size_t>(src)] + static_cast<float>(rng.normal() * sigma));
    }
    return out;
}

template <typename T>
Conditioners<T>::Conditioners(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int w = cfg.d_cond, h = cfg.vae_heads, ff = cfg.ff_mult * w;
    phone_embed_ = ps_.add("cond.embed", Tensor<T>::randn({cfg.vocab, w}, rng, 1.0 / std::sqrt(w)));
    for (int i = 0; i < cfg.vae_layers; ++i)
        encoder_.emplace_back(ps_, "cond.enc" + std::to_string(i), w, h, ff, rng);
    word_proj_ = Linear<T>(ps_, "cond.word_proj", w, w, rng);
    context_cross_ = TransformerLayer<T>(ps_, "cond.context_cross", w, h, ff, rng);
    for (int i = 0; i < cfg.text_head_layers; ++i)
        text_head_.emplace_back(ps_, "cond.text_head" + std::to_string(i), w, h, ff, rng);
    text_out_ = Linear<T>(ps_, "cond.text_out", w, w, rng);
    prototypes_ = ps_.add("cond.prototypes", Tensor<T>::randn({cfg.prototypes, w}, rng, 1.0 / std::sqrt(w)));
    ref_proj_ = Linear<T>(ps_, "cond.ref_proj", cfg.feat_dim(), w, rng);
    retriever_cross_ = TransformerLayer<T>(ps_, "cond.retr_cross", w, h, ff, rng);
    retriever_self_ = TransformerLayer<T>(ps_, "cond.retr_self", w, h, ff, rng);
    ref_cross_ = TransformerLayer<T>(ps_, "cond.ref_cross", w, h, ff, rng);
    ref_out_ = Linear<T>(ps_, "cond.ref_out", w, w, rng);
}

template <typename T>
Tensor<T> Conditioners<T>::context_features(const PhonemeSeq& seq, std::uint64_t embed_seed) const {
    if (seq.ids.empty()) throw std::invalid_argument("context_features: empty sequence");
    Tensor<T> x = embedding(phone_embed_, seq.ids);
    x = add(x, positional_encoding<T>(seq.length(), cfg_.d_cond));
    for (const auto& layer : encoder_) x = layer(x);
    Tensor<T> words = word_proj_(context_embed<T>(seq, embed_seed, cfg_.d_cond));
    return context_cross_.forward(x, words);
}

template <typename T>
Tensor<T> Conditioners<T>::text_condition(const Tensor<T>& context_feats) const {
    Tensor<T> h = context_feats;
    for (const auto& layer : text_head_) h = layer(h);
    return text_out_(h);
}

template <typename T>
Tensor<T> Conditioners<T>::speaker_tokens(const FeatureFrames& reference) const {
    if (reference.count == 0) throw std::invalid_argument("speaker_tokens: empty reference");
    auto stacked = reference.stacked();
    Tensor<T> feats = Tensor<T>::raw({reference.count, cfg_.feat_dim()});
    for (std::size_t i = 0; i < stacked.size(); ++i) feats.data()[i] = static_cast<T>(stacked[i]);
    Tensor<T> kv = add(ref_proj_(feats), positional_encoding<T>(reference.count, cfg_.d_cond));
    Tensor<T> tokens = retriever_cross_.forward(prototypes_, kv);
    return retriever_self_(tokens);
}

template <typename T>
Tensor<T> Conditioners<T>::reference_condition(const FeatureFrames& reference,
                                               const Tensor<T>& context_feats) const {
    Tensor<T> tokens = speaker_tokens(reference);
    return ref_out_(ref_cross_.forward(context_feats, tokens));
}

template <typename T>
ConditionSet<T> Conditioners<T>::build(const PhonemeSeq& seq, const FeatureFrames* reference,
                                       std::uint64_t embed_seed, bool null_text, bool null_spk) const {
    const int p_count = seq.length();
    ConditionSet<T> set;
    set.null_text = null_text;
    set.null_spk = null_spk;
    if (null_text && null_spk) {
        set.c_text = Tensor<T>::zeros({p_count, cfg_.d_cond});
        set.c_spk = Tensor<T>::zeros({p_count, cfg_.d_cond});
        return set;
    }
    Tensor<T> ctx = context_features(seq, embed_seed);
    set.c_text = null_text ? Tensor<T>::zeros({p_count, cfg_.d_cond}) : text_condition(ctx);
    if (null_spk) {
        set.c_spk = Tensor<T>::zeros({p_count, cfg_.d_cond});
    } else {
        if (reference == nullptr) throw std::invalid_argument("Conditioners::build: reference required");
        set.c_spk = reference_condition(*reference, ctx);
    }
    return set;
}

template Tensor<float> context_embed<float>(const PhonemeSeq&, std::uint64_t, int);
template Tensor<double> context_embed<double>(const PhonemeSeq&, std::uint64_t, int);
template class Conditioners<float>;
template class Conditioners<double>;

}  // namespace pldiff

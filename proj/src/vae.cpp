#include "pldiff/vae.hpp"

#include <cmath>
#include <stdexcept>

namespace pldiff {

template <typename T>
Vae<T>::Vae(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int w = cfg.vae_width, h = cfg.vae_heads, ff = cfg.ff_mult * w;
    phone_embed_ = ps_.add("vae.embed", Tensor<T>::randn({cfg.vocab, w}, rng, 1.0 / std::sqrt(w)));
    for (int i = 0; i < cfg.vae_layers; ++i)
        encoder_.emplace_back(ps_, "vae.enc" + std::to_string(i), w, h, ff, rng);
    feat_proj_ = Linear<T>(ps_, "vae.feat_proj", cfg.feat_dim(), w, rng);
    bottleneck_ = TransformerLayer<T>(ps_, "vae.bottleneck", w, h, ff, rng);
    head_mean_ = Linear<T>(ps_, "vae.head_mean", w, cfg.d_z, rng);
    head_logvar_ = Linear<T>(ps_, "vae.head_logvar", w, cfg.d_z, rng);
    z_proj_ = Linear<T>(ps_, "vae.z_proj", cfg.d_z, w, rng);
    for (int i = 0; i < cfg.vae_layers; ++i)
        latent_decoder_.emplace_back(ps_, "vae.dec" + std::to_string(i), w, h, ff, rng);
    dur_head_ = Mlp2<T>(ps_, "vae.dur_head", w, w, 1, rng);
    f0_head_ = Mlp2<T>(ps_, "vae.f0_head", w, w, 1, rng);
    upsampler_ = TransformerLayer<T>(ps_, "vae.upsampler", w, h, ff, rng);
    for (int i = 0; i < cfg.vae_layers; ++i)
        frame_decoder_.emplace_back(ps_, "vae.frame_dec" + std::to_string(i), w, h, ff, rng);
    out_head_ = Linear<T>(ps_, "vae.out_head", w, cfg.feat_dim(), rng);
}

template <typename T>
Tensor<T> Vae<T>::phoneme_encode(const PhonemeSeq& seq) const {
    if (seq.ids.empty()) throw std::invalid_argument("Vae::phoneme_encode: empty sequence");
    Tensor<T> x = embedding(phone_embed_, seq.ids);
    x = add(x, positional_encoding<T>(seq.length(), cfg_.vae_width));
    for (const auto& layer : encoder_) x = layer(x);
    return x;
}

template <typename T>
PhonemeLatent<T> Vae<T>::encode(const PhonemeSeq& seq, const FeatureFrames& features) const {
    if (features.count == 0) throw std::invalid_argument("Vae::encode: empty features");
    Tensor<T> queries = phoneme_encode(seq);

    auto stacked = features.stacked();
    Tensor<T> feats = Tensor<T>::raw({features.count, cfg_.feat_dim()});
    for (std::size_t i = 0; i < stacked.size(); ++i) feats.data()[i] = static_cast<T>(stacked[i]);
    Tensor<T> kv = add(feat_proj_(feats), positional_encoding<T>(features.count, cfg_.vae_width));

    Tensor<T> h = bottleneck_.forward(queries, kv);
    PhonemeLatent<T> latent;
    latent.mean = head_mean_(h);
    latent.logvar = clamp(head_logvar_(h), -10.0, 10.0);
    return latent;
}

template <typename T>
Tensor<T> Vae<T>::reparam_sample(const PhonemeLatent<T>& latent, const Tensor<T>& noise) const {
    detail::same_shape(latent.mean, noise, "reparam_sample");
    return add(latent.mean, mul(exp_(scale(latent.logvar, 0.5)), noise));
}

template <typename T>
std::vector<int> Vae<T>::round_durations(const std::vector<double>& dur_linear, int max_frames) {
    std::vector<int> rounded(dur_linear.size());
    bool any = false;
    for (std::size_t i = 0; i < dur_linear.size(); ++i) {
        const double clipped = std::min(dur_linear[i], static_cast<double>(max_frames));
        rounded[i] = static_cast<int>(std::floor(clipped + 0.5));
        any = any || rounded[i] > 0;
    }
    if (!any) throw std::runtime_error("decode: predicted durations all zero (degenerate utterance)");
    for (auto& r : rounded) r = std::max(1, r);
    return rounded;
}

template <typename T>
VaeOutputs<T> Vae<T>::decode(const Tensor<T>& z, const std::vector<int>* teacher_durations) const {
    if (z.shape().size() != 2 || z.cols() != cfg_.d_z)
        throw std::invalid_argument("Vae::decode: z must be P x d_z");
    const int p_count = z.rows();

    Tensor<T> h = add(z_proj_(z), positional_encoding<T>(p_count, cfg_.vae_width));
    for (const auto& layer : latent_decoder_) h = layer(h);

    VaeOutputs<T> out;
    out.log_dur = dur_head_(h);
    out.f0 = f0_head_(h);

    if (teacher_durations != nullptr) {
        if (static_cast<int>(teacher_durations->size()) != p_count)
            throw std::invalid_argument("Vae::decode: teacher duration length mismatch");
        out.durations_used = *teacher_durations;
    } else {
        std::vector<double> linear(static_cast<std::size_t>(p_count));
        for (int i = 0; i < p_count; ++i)
            linear[static_cast<std::size_t>(i)] =
                std::exp(std::min(20.0, static_cast<double>(out.log_dur[static_cast<std::size_t>(i)])));
        out.durations_used = round_durations(linear);
    }

    Tensor<T> up = repeat_rows(h, out.durations_used);
    up = add(up, positional_encoding<T>(up.rows(), cfg_.vae_width));
    up = upsampler_(up);
    for (const auto& layer : frame_decoder_) up = layer(up);
    out.frames = out_head_(up);
    return out;
}

std::vector<float> phoneme_f0_targets(const FeatureFrames& features, const std::vector<int>& durations) {
    std::vector<float> targets(durations.size(), 0.0f);
    int f = 0;
    for (std::size_t p = 0; p < durations.size(); ++p) {
        double sum = 0.0;
        for (int k = 0; k < durations[p]; ++k, ++f) sum += features.f0_norm[static_cast<std::size_t>(f)];
        targets[p] = durations[p] > 0 ? static_cast<float>(sum / durations[p]) : 0.0f;
    }
    if (f != features.count) throw std::invalid_argument("phoneme_f0_targets: durations do not sum to F");
    return targets;
}

template <typename T>
VaeLossParts<T> vae_loss(const VaeOutputs<T>& out, const FeatureFrames& target,
                         const std::vector<int>& target_durations, const PhonemeLatent<T>& latent,
                         double lambda_kl, double lambda_dur, double lambda_f0) {
    const int p_count = latent.mean.rows();
    if (static_cast<int>(target_durations.size()) != p_count)
        throw std::invalid_argument("vae_loss: duration count mismatch");

    auto stacked = target.stacked();
    Tensor<T> target_frames = Tensor<T>::raw({target.count, target.feat_dim()});
    for (std::size_t i = 0; i < stacked.size(); ++i) target_frames.data()[i] = static_cast<T>(stacked[i]);

    Tensor<T> recon = l1_loss(out.frames, target_frames);

    Tensor<T> log_dur_target = Tensor<T>::raw({p_count, 1});
    for (int i = 0; i < p_count; ++i)
        log_dur_target.data()[static_cast<std::size_t>(i)] =
            static_cast<T>(std::log(static_cast<double>(target_durations[static_cast<std::size_t>(i)])));
    Tensor<T> dur = mse_loss(out.log_dur, log_dur_target);

    auto f0t = phoneme_f0_targets(target, target_durations);
    Tensor<T> f0_target = Tensor<T>::raw({p_count, 1});
    for (int i = 0; i < p_count; ++i)
        f0_target.data()[static_cast<std::size_t>(i)] = static_cast<T>(f0t[static_cast<std::size_t>(i)]);
    Tensor<T> f0 = l1_loss(out.f0, f0_target);

    // KL(q || N(0, I)) per dim: 0.5 (mu^2 + sigma^2 - 1 - log sigma^2)
    Tensor<T> mu2 = mul(latent.mean, latent.mean);
    Tensor<T> kl_terms = sub(sub(add(mu2, exp_(latent.logvar)), Tensor<T>::filled(latent.logvar.shape(), T(1))),
                             latent.logvar);
    Tensor<T> kl = scale(mean_all(kl_terms), 0.5);

    VaeLossParts<T> parts;
    parts.recon = static_cast<double>(recon.item());
    parts.dur = static_cast<double>(dur.item());
    parts.f0 = static_cast<double>(f0.item());
    parts.kl = static_cast<double>(kl.item());
    parts.total = add(add(recon, scale(kl, lambda_kl)),
                      add(scale(dur, lambda_dur), scale(f0, lambda_f0)));
    return parts;
}

template <typename T>
Discriminator<T>::Discriminator(const ModelConfig& cfg, Rng& rng) {
    const int c = cfg.disc_channels, k = cfg.disc_kernel, in = cfg.feat_dim();
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in * k));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(c * k));
    w1_ = ps_.add("disc.w1", Tensor<T>::randn({c, in, k}, rng, s1));
    b1_ = ps_.add("disc.b1", Tensor<T>::zeros({c}));
    w2_ = ps_.add("disc.w2", Tensor<T>::randn({c, c, k}, rng, s2));
    b2_ = ps_.add("disc.b2", Tensor<T>::zeros({c}));
    w3_ = ps_.add("disc.w3", Tensor<T>::randn({c, c, k}, rng, s2));
    b3_ = ps_.add("disc.b3", Tensor<T>::zeros({c}));
    w4_ = ps_.add("disc.w4", Tensor<T>::randn({1, c, 3}, rng, 1.0 / std::sqrt(3.0 * c)));
    b4_ = ps_.add("disc.b4", Tensor<T>::zeros({1}));
}

template <typename T>
std::vector<Tensor<T>> Discriminator<T>::features(const Tensor<T>& frames) const {
    const int pad = (w1_.dim(2) - 1) / 2;
    std::vector<Tensor<T>> feats;
    Tensor<T> h = leaky_relu(conv1d(frames, w1_, b1_, 2, pad));
    feats.push_back(h);
    h = leaky_relu(conv1d(h, w2_, b2_, 2, pad));
    feats.push_back(h);
    h = leaky_relu(conv1d(h, w3_, b3_, 2, pad));
    feats.push_back(h);
    feats.push_back(conv1d(h, w4_, b4_, 1, 1));
    return feats;
}

template <typename T>
AdvLosses<T> adversarial_losses(const Discriminator<T>& disc, const Tensor<T>& real_frames,
                                const Tensor<T>& fake_frames) {
    detail::same_shape(real_frames, fake_frames, "adversarial_losses");
    auto real_feats = disc.features(real_frames);
    auto fake_feats = disc.features(fake_frames);
    auto fake_detached = disc.features(fake_frames.detach());

    const Tensor<T>& d_real = real_feats.back();
    const Tensor<T>& d_fake_det = fake_detached.back();
    const Tensor<T>& d_fake = fake_feats.back();

    Tensor<T> ones = Tensor<T>::filled(d_real.shape(), T(1));
    Tensor<T> zeros = Tensor<T>::zeros(d_real.shape());

    AdvLosses<T> out;
    out.d_loss = add(mse_loss(d_real, ones), mse_loss(d_fake_det, zeros));
    out.g_loss = mse_loss(d_fake, ones);

    Tensor<T> fm;
    const std::size_t n_layers = real_feats.size() - 1;
    for (std::size_t i = 0; i < n_layers; ++i) {
        Tensor<T> term = l1_loss(fake_feats[i], real_feats[i].detach());
        fm = i == 0 ? term : add(fm, term);
    }
    out.fm_loss = scale(fm, 1.0 / static_cast<double>(n_layers));
    return out;
}

template class Vae<float>;
template class Vae<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template VaeLossParts<float> vae_loss(const VaeOutputs<float>&, const FeatureFrames&,
                                      const std::vector<int>&, const PhonemeLatent<float>&, double,
                                      double, double);
template VaeLossParts<double> vae_loss(const VaeOutputs<double>&, const FeatureFrames&,
                                       const std::vector<int>&, const PhonemeLatent<double>&, double,
                                       double, double);
template AdvLosses<float> adversarial_losses(const Discriminator<float>&, const Tensor<float>&,
                                             const Tensor<float>&);
template AdvLosses<double> adversarial_losses(const Discriminator<double>&, const Tensor<double>&,
                                              const Tensor<double>&);

}  // namespace pldiff

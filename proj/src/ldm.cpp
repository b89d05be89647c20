#include "pldiff/ldm.hpp"

#include <cmath>
#include <stdexcept>

namespace pldiff {

template <typename T>
Denoiser<T>::Denoiser(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int w = cfg.denoiser_width, h = cfg.denoiser_heads, ff = cfg.ff_mult * w;
    z_in_ = Linear<T>(ps_, "ldm.z_in", cfg.d_z, w, rng);
    t_mlp_ = Mlp2<T>(ps_, "ldm.t_mlp", w, w, w, rng);
    text_mlp_ = Mlp2<T>(ps_, "ldm.text_mlp", cfg.d_cond, w, w, rng);
    spk_mlp_ = Mlp2<T>(ps_, "ldm.spk_mlp", cfg.d_cond, w, w, rng);
    for (int i = 0; i < cfg.denoiser_layers; ++i)
        layers_.emplace_back(ps_, "ldm.layer" + std::to_string(i), w, h, ff, rng);
    final_ln_ = LayerNorm<T>(ps_, "ldm.final_ln", w);
    out_ = Linear<T>(ps_, "ldm.out", w, cfg.d_z, rng);
}

template <typename T>
Tensor<T> Denoiser<T>::operator()(const Tensor<T>& z_t, double t, const ConditionSet<T>& cond) const {
    if (z_t.shape().size() != 2 || z_t.cols() != cfg_.d_z)
        throw std::invalid_argument("Denoiser: z_t must be P x d_z");
    const int p_count = z_t.rows();
    const int w = cfg_.denoiser_width;

    // null flags substitute exact zero tensors regardless of contents
    Tensor<T> c_text = cond.null_text ? Tensor<T>::zeros({p_count, cfg_.d_cond}) : cond.c_text;
    Tensor<T> c_spk = cond.null_spk ? Tensor<T>::zeros({p_count, cfg_.d_cond}) : cond.c_spk;
    if (c_text.rows() != p_count || c_spk.rows() != p_count)
        throw std::invalid_argument("Denoiser: condition length mismatch");

    Tensor<T> tok = add(z_in_(z_t), positional_encoding<T>(p_count, w));
    Tensor<T> temb = t_mlp_(sinusoidal_embedding<T>(t, w));  // 1 x w
    tok = add_rowvec(tok, temb);
    tok = add(tok, text_mlp_(c_text));
    tok = add(tok, spk_mlp_(c_spk));
    for (const auto& layer : layers_) tok = layer(tok);
    return out_(final_ln_(tok));
}

std::pair<bool, bool> condition_dropout(Rng& rng, double p_text, double p_spk, double p_both) {
    const bool drop_text = rng.uniform() < p_text;
    const bool drop_spk = rng.uniform() < p_spk;
    const bool drop_both = rng.uniform() < p_both;
    return {drop_text || drop_both, drop_spk || drop_both};
}

template <typename T>
std::vector<T> dual_cfg(const std::vector<T>& eps_full, const std::vector<T>& eps_spk_only,
                        const std::vector<T>& eps_text_only, const std::vector<T>& eps_null,
                        const GuidanceWeights& w) {
    if (eps_full.size() != eps_spk_only.size() || eps_full.size() != eps_text_only.size() ||
        eps_full.size() != eps_null.size())
        throw std::invalid_argument("dual_cfg: size mismatch");
    std::vector<T> out(eps_full.size());
    const T ws = static_cast<T>(w.w_spk), wt = static_cast<T>(w.w_text);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = eps_full[i] + ws * (eps_spk_only[i] - eps_null[i]) + wt * (eps_text_only[i] - eps_null[i]);
    return out;
}

template <typename T>
Tensor<T> ldm_loss(const Denoiser<T>& denoiser, const std::vector<T>& mu, int p_count,
                   const ConditionSet<T>& cond, const DiffusionSchedule& sched, int t,
                   const std::vector<T>& eps) {
    const int d_z = denoiser.config().d_z;
    if (mu.size() != static_cast<std::size_t>(p_count) * d_z || mu.size() != eps.size())
        throw std::invalid_argument("ldm_loss: size mismatch");
    auto z_vec = forward_diffuse(mu, t, eps, sched);
    Tensor<T> z_t = Tensor<T>::from({p_count, d_z}, z_vec);
    Tensor<T> eps_target = Tensor<T>::from({p_count, d_z}, eps);
    Tensor<T> eps_hat = denoiser(z_t, static_cast<double>(t), cond);
    return l1_loss(eps_hat, eps_target);
}

namespace {

void check_finite_or_throw(const std::vector<float>& z, const char* mode, double step) {
    for (float v : z) {
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("sample_latent(") + mode +
                                     "): non-finite latent at step " + std::to_string(step));
    }
}

double l2_norm(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

}  // namespace

std::vector<float> sample_latent(const GuidedEpsFn& eps_fn, int p_count, int d_z,
                                 const DiffusionSchedule& sched, const FastPlan* plan,
                                 const GuidanceWeights& w, SamplerMode mode, Rng& rng,
                                 SampleTrace* trace) {
    const std::size_t n = static_cast<std::size_t>(p_count) * d_z;
    std::vector<float> z(n);
    for (auto& v : z) v = static_cast<float>(rng.normal());

    const bool zero_w = w.w_text == 0.0 && w.w_spk == 0.0;
    auto guided = [&](const std::vector<float>& cur, double t) {
        if (zero_w) return eps_fn(cur, t, CondVariant::Full);
        auto e_full = eps_fn(cur, t, CondVariant::Full);
        auto e_spk = eps_fn(cur, t, CondVariant::SpkOnly);
        auto e_text = eps_fn(cur, t, CondVariant::TextOnly);
        auto e_null = eps_fn(cur, t, CondVariant::Null);
        return dual_cfg(e_full, e_spk, e_text, e_null, w);
    };

    std::vector<float> xi(n, 0.0f);
    if (mode == SamplerMode::Full) {
        for (int t = sched.steps; t >= 1; --t) {
            auto eps_tilde = guided(z, static_cast<double>(t));
            if (trace) {
                trace->t.push_back(static_cast<double>(t));
                trace->eps_norm.push_back(l2_norm(eps_tilde));
            }
            if (t > 1)
                for (auto& v : xi) v = static_cast<float>(rng.normal());
            z = ancestral_step(z, eps_tilde, t, sched, xi);
            check_finite_or_throw(z, "full", t);
        }
    } else {
        if (plan == nullptr) throw std::invalid_argument("sample_latent: fast mode needs a plan");
        for (int s = plan->steps() - 1; s >= 0; --s) {
            const double t = plan->mapped_t[static_cast<std::size_t>(s)];
            auto eps_tilde = guided(z, t);
            if (trace) {
                trace->t.push_back(t);
                trace->eps_norm.push_back(l2_norm(eps_tilde));
            }
            if (s > 0)
                for (auto& v : xi) v = static_cast<float>(rng.normal());
            z = fast_step(z, eps_tilde, s, *plan, xi);
            check_finite_or_throw(z, "fast", t);
        }
    }
    return z;
}

GuidedEpsFn make_denoiser_eps_fn(const Denoiser<float>& denoiser, const ConditionSet<float>& full,
                                 const ConditionSet<float>& spk_only,
                                 const ConditionSet<float>& text_only,
                                 const ConditionSet<float>& null_set) {
    return [&denoiser, full, spk_only, text_only, null_set](const std::vector<float>& z, double t,
                                                            CondVariant variant) {
        const ConditionSet<float>* cond = &full;
        switch (variant) {
            case CondVariant::Full: cond = &full; break;
            case CondVariant::SpkOnly: cond = &spk_only; break;
            case CondVariant::TextOnly: cond = &text_only; break;
            case CondVariant::Null: cond = &null_set; break;
        }
        const int d_z = denoiser.config().d_z;
        const int p_count = static_cast<int>(z.size()) / d_z;
        Tensor<float> z_t = Tensor<float>::from({p_count, d_z}, z);
        return denoiser(z_t, t, *cond).data();
    };
}

template class Denoiser<float>;
template class Denoiser<double>;
template std::vector<float> dual_cfg(const std::vector<float>&, const std::vector<float>&,
                                     const std::vector<float>&, const std::vector<float>&,
                                     const GuidanceWeights&);
template std::vector<double> dual_cfg(const std::vector<double>&, const std::vector<double>&,
                                      const std::vector<double>&, const std::vector<double>&,
                                      const GuidanceWeights&);
template Tensor<float> ldm_loss(const Denoiser<float>&, const std::vector<float>&, int,
                                const ConditionSet<float>&, const DiffusionSchedule&, int,
                                const std::vector<float>&);
template Tensor<double> ldm_loss(const Denoiser<double>&, const std::vector<double>&, int,
                                 const ConditionSet<double>&, const DiffusionSchedule&, int,
                                 const std::vector<double>&);

}  // namespace pldiff

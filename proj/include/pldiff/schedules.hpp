#pragma once

#include <string>
#include <vector>

namespace pldiff {

// Diffusion-time tables. beta/alpha/alpha_bar are stored for steps 1..T at
// indices 0..T-1; alpha_bar_0 == 1 by convention and is not stored.
// Tables are double precision; the latent-space step helpers are templated
// so the same code serves the float training path and the double oracles.
struct DiffusionSchedule {
    int steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    double beta_at(int t) const;       // t in [1, T]
    double alpha_at(int t) const;
    double alpha_bar_at(int t) const;  // t in [0, T], alpha_bar_at(0) == 1

    // continuous noise level: sqrt(alpha_bar) interpolated linearly
    // between the neighbouring integer steps
    double sqrt_alpha_bar_cont(double t) const;
};

DiffusionSchedule linear_beta_schedule(int steps, double beta1, double betaT);

void write_schedule_csv(const DiffusionSchedule& s, const std::string& path);

// 16-value inference schedule from the fast-sampling method this follows.
std::vector<double> default_fast_schedule();

// Short user-defined schedule mapped onto the training schedule.
// mapped_t[s] is the fractional training timestep whose interpolated
// noise level equals gamma[s]; reverse sampling walks s = S-1 .. 0.
struct FastPlan {
    std::vector<double> user_beta;
    std::vector<double> gamma;     // cumprod(1 - user_beta)
    std::vector<double> mapped_t;  // fractional training timesteps
    std::vector<double> sigma;     // per-step reverse noise scale
    bool clamped = false;          // some gamma fell outside [alpha_bar_T, 1]

    int steps() const { return static_cast<int>(user_beta.size()); }
};

FastPlan fast_sampling_plan(const std::vector<double>& user_beta, const DiffusionSchedule& sched);

// z_t = sqrt(abar_t) mu + sqrt(1 - abar_t) eps
template <typename T>
std::vector<T> forward_diffuse(const std::vector<T>& mu, int t, const std::vector<T>& eps,
                               const DiffusionSchedule& sched);

// One reverse step under the training schedule:
//   z_{t-1} = (z_t - beta_t/sqrt(1-abar_t) eps_hat)/sqrt(alpha_t) + sigma_t xi
// with sigma_t^2 = beta_t (1-abar_{t-1})/(1-abar_t), and no noise at t = 1.
template <typename T>
std::vector<T> ancestral_step(const std::vector<T>& z_t, const std::vector<T>& eps_hat, int t,
                              const DiffusionSchedule& sched, const std::vector<T>& xi);

// One reverse step of the fast plan at position s (0-based into the plan).
template <typename T>
std::vector<T> fast_step(const std::vector<T>& z, const std::vector<T>& eps_hat, int s,
                         const FastPlan& plan, const std::vector<T>& xi);

}  // namespace pldiff

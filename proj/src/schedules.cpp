#include "pldiff/schedules.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace pldiff {

double DiffusionSchedule::beta_at(int t) const {
    if (t < 1 || t > steps) throw std::out_of_range("beta_at: t out of [1, T]");
    return beta[static_cast<std::size_t>(t - 1)];
}

double DiffusionSchedule::alpha_at(int t) const {
    if (t < 1 || t > steps) throw std::out_of_range("alpha_at: t out of [1, T]");
    return alpha[static_cast<std::size_t>(t - 1)];
}

double DiffusionSchedule::alpha_bar_at(int t) const {
    if (t < 0 || t > steps) throw std::out_of_range("alpha_bar_at: t out of [0, T]");
    return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)];
}

double DiffusionSchedule::sqrt_alpha_bar_cont(double t) const {
    if (t < 0.0 || t > static_cast<double>(steps))
        throw std::out_of_range("sqrt_alpha_bar_cont: t out of [0, T]");
    const int lo = static_cast<int>(std::floor(t));
    if (static_cast<double>(lo) == t) return std::sqrt(alpha_bar_at(lo));
    const double a = std::sqrt(alpha_bar_at(lo));
    const double b = std::sqrt(alpha_bar_at(lo + 1));
    const double frac = t - static_cast<double>(lo);
    return a + (b - a) * frac;
}

DiffusionSchedule linear_beta_schedule(int steps, double beta1, double betaT) {
    if (steps < 2) throw std::invalid_argument("linear_beta_schedule: T must be >= 2");
    if (!(0.0 < beta1 && beta1 < betaT && betaT < 1.0))
        throw std::invalid_argument("linear_beta_schedule: need 0 < beta1 < betaT < 1");
    DiffusionSchedule s;
    s.steps = steps;
    s.beta.resize(static_cast<std::size_t>(steps));
    s.alpha.resize(static_cast<std::size_t>(steps));
    s.alpha_bar.resize(static_cast<std::size_t>(steps));
    double prod = 1.0;
    for (int i = 1; i <= steps; ++i) {
        const double b = beta1 + (betaT - beta1) * static_cast<double>(i - 1) / static_cast<double>(steps - 1);
        s.beta[static_cast<std::size_t>(i - 1)] = b;
        s.alpha[static_cast<std::size_t>(i - 1)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<std::size_t>(i - 1)] = prod;
    }
    return s;
}

void write_schedule_csv(const DiffusionSchedule& s, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_schedule_csv: cannot open " + path);
    f << "i,beta,alpha,alpha_bar\n";
    f.precision(17);
    for (int i = 1; i <= s.steps; ++i)
        f << i << ',' << s.beta_at(i) << ',' << s.alpha_at(i) << ',' << s.alpha_bar_at(i) << '\n';
}

std::vector<double> default_fast_schedule() {
    return {1e-4, 5e-4, 1e-3, 5e-3, 0.01, 0.02, 0.05, 0.2, 0.3, 0.5, 0.4, 0.3, 0.3, 0.2, 0.1, 0.1};
}

FastPlan fast_sampling_plan(const std::vector<double>& user_beta, const DiffusionSchedule& sched) {
    if (user_beta.empty()) throw std::invalid_argument("fast_sampling_plan: empty schedule");
    for (double b : user_beta)
        if (!(0.0 < b && b < 1.0)) throw std::invalid_argument("fast_sampling_plan: beta out of (0,1)");

    FastPlan plan;
    plan.user_beta = user_beta;
    plan.gamma.resize(user_beta.size());
    plan.mapped_t.resize(user_beta.size());
    plan.sigma.resize(user_beta.size());

    double prod = 1.0;
    for (std::size_t s = 0; s < user_beta.size(); ++s) {
        prod *= 1.0 - user_beta[s];
        plan.gamma[s] = prod;
    }

    const double abar_T = sched.alpha_bar_at(sched.steps);
    for (std::size_t s = 0; s < user_beta.size(); ++s) {
        double g = plan.gamma[s];
        if (g < abar_T || g > 1.0) {
            plan.clamped = true;
            g = g < abar_T ? abar_T : 1.0;
        }
        const double target = std::sqrt(g);
        // locate target between consecutive sqrt(alpha_bar) values; the
        // table is strictly decreasing from sqrt(abar_0) = 1
        double mapped = static_cast<double>(sched.steps);
        for (int t = 0; t < sched.steps; ++t) {
            const double hi = std::sqrt(sched.alpha_bar_at(t));
            const double lo = std::sqrt(sched.alpha_bar_at(t + 1));
            if (lo <= target && target <= hi) {
                mapped = static_cast<double>(t) + (hi - target) / (hi - lo);
                break;
            }
        }
        plan.mapped_t[s] = mapped;

        // Reverse noise scale from the user schedule. sigma_s^2 = user_beta_s:
        // the posterior-style lower-variance choice under-disperses when the
        // plan takes large steps, which breaks the Gaussian sampler oracle.
        plan.sigma[s] = s == 0 ? 0.0 : std::sqrt(user_beta[s]);
    }
    return plan;
}

namespace {

template <typename T>
void check_same_size(const std::vector<T>& a, const std::vector<T>& b, const char* op) {
    if (a.size() != b.size()) throw std::invalid_argument(std::string(op) + ": size mismatch");
}

}  // namespace

template <typename T>
std::vector<T> forward_diffuse(const std::vector<T>& mu, int t, const std::vector<T>& eps,
                               const DiffusionSchedule& sched) {
    check_same_size(mu, eps, "forward_diffuse");
    if (t < 0 || t > sched.steps) throw std::out_of_range("forward_diffuse: t out of [0, T]");
    const T a = static_cast<T>(std::sqrt(sched.alpha_bar_at(t)));
    const T b = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar_at(t)));
    std::vector<T> z(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) z[i] = a * mu[i] + b * eps[i];
    return z;
}

template <typename T>
std::vector<T> ancestral_step(const std::vector<T>& z_t, const std::vector<T>& eps_hat, int t,
                              const DiffusionSchedule& sched, const std::vector<T>& xi) {
    check_same_size(z_t, eps_hat, "ancestral_step");
    if (t < 1 || t > sched.steps) throw std::out_of_range("ancestral_step: t out of [1, T]");
    const double beta = sched.beta_at(t);
    const double abar = sched.alpha_bar_at(t);
    const double abar_prev = sched.alpha_bar_at(t - 1);
    const T inv_sqrt_alpha = static_cast<T>(1.0 / std::sqrt(sched.alpha_at(t)));
    const T coef = static_cast<T>(beta / std::sqrt(1.0 - abar));
    const T sigma = t == 1 ? T(0) : static_cast<T>(std::sqrt(beta * (1.0 - abar_prev) / (1.0 - abar)));
    if (t > 1) check_same_size(z_t, xi, "ancestral_step");
    std::vector<T> out(z_t.size());
    for (std::size_t i = 0; i < z_t.size(); ++i) {
        out[i] = inv_sqrt_alpha * (z_t[i] - coef * eps_hat[i]);
        if (t > 1) out[i] += sigma * xi[i];
    }
    return out;
}

template <typename T>
std::vector<T> fast_step(const std::vector<T>& z, const std::vector<T>& eps_hat, int s,
                         const FastPlan& plan, const std::vector<T>& xi) {
    check_same_size(z, eps_hat, "fast_step");
    if (s < 0 || s >= plan.steps()) throw std::out_of_range("fast_step: s out of range");
    const double beta = plan.user_beta[static_cast<std::size_t>(s)];
    const double gamma = plan.gamma[static_cast<std::size_t>(s)];
    const T inv_sqrt_alpha = static_cast<T>(1.0 / std::sqrt(1.0 - beta));
    const T coef = static_cast<T>(beta / std::sqrt(1.0 - gamma));
    const T sigma = static_cast<T>(plan.sigma[static_cast<std::size_t>(s)]);
    if (s > 0) check_same_size(z, xi, "fast_step");
    std::vector<T> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = inv_sqrt_alpha * (z[i] - coef * eps_hat[i]);
        if (s > 0) out[i] += sigma * xi[i];
    }
    return out;
}

template std::vector<float> forward_diffuse<float>(const std::vector<float>&, int,
                                                   const std::vector<float>&, const DiffusionSchedule&);
template std::vector<double> forward_diffuse<double>(const std::vector<double>&, int,
                                                     const std::vector<double>&, const DiffusionSchedule&);
template std::vector<float> ancestral_step<float>(const std::vector<float>&, const std::vector<float>&,
                                                  int, const DiffusionSchedule&, const std::vector<float>&);
template std::vector<double> ancestral_step<double>(const std::vector<double>&, const std::vector<double>&,
                                                    int, const DiffusionSchedule&, const std::vector<double>&);
template std::vector<float> fast_step<float>(const std::vector<float>&, const std::vector<float>&, int,
                                             const FastPlan&, const std::vector<float>&);
template std::vector<double> fast_step<double>(const std::vector<double>&, const std::vector<double>&, int,
                                               const FastPlan&, const std::vector<double>&);

}  // namespace pldiff

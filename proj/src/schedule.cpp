#include "qsm/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "qsm/errors.hpp"

namespace qsm {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, ScheduleKind kind) {
    if (kind != ScheduleKind::linear) throw parameter_error("unknown schedule kind");
    if (T < 1) throw parameter_error("schedule needs T >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw parameter_error("schedule needs 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.steps = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    s.sigma.resize(T);

    double bar = 1.0;
    for (int i = 0; i < T; ++i) {
        const double f = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
        s.beta[i] = beta_start + f * (beta_end - beta_start);
        s.alpha[i] = 1.0 - s.beta[i];
        const double bar_prev = bar;
        bar *= s.alpha[i];
        s.alpha_bar[i] = bar;
        s.sigma[i] = std::sqrt(s.beta[i] * (1.0 - bar_prev) / (1.0 - bar));
    }
    return s;
}

std::vector<int> ddim_timesteps(int T, int count) {
    if (count < 1) throw parameter_error("ddim step count must be positive");
    count = std::min(count, T);
    std::vector<int> ts;
    ts.reserve(count);
    for (int i = 0; i < count; ++i) {
        const double f = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
        const int t = static_cast<int>(std::lround(T - f * (T - 1)));
        if (ts.empty() || ts.back() != t) ts.push_back(t);
    }
    return ts; // descending, ends at 1
}

namespace {

void check_t(int t, const NoiseSchedule& s) {
    if (t < 1 || t > s.steps) throw parameter_error("timestep out of schedule range");
}

} // namespace

void q_sample(std::span<const double> x0, std::span<const double> eps, int t,
              const NoiseSchedule& sched, std::span<double> out) {
    check_t(t, sched);
    const double a = std::sqrt(sched.alpha_bar_at(t));
    const double b = std::sqrt(1.0 - sched.alpha_bar_at(t));
    const long n = static_cast<long>(x0.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out[i] = a * x0[i] + b * eps[i];
}

void predict_x0(std::span<const double> xt, std::span<const double> eps_hat, int t,
                const NoiseSchedule& sched, std::span<double> out) {
    check_t(t, sched);
    const double inv_a = 1.0 / std::sqrt(sched.alpha_bar_at(t));
    const double b = std::sqrt(1.0 - sched.alpha_bar_at(t));
    const long n = static_cast<long>(xt.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out[i] = inv_a * (xt[i] - b * eps_hat[i]);
}

void ddpm_step(std::span<const double> xt, std::span<const double> eps_hat, int t,
               std::span<const double> z, const NoiseSchedule& sched, std::span<double> out) {
    check_t(t, sched);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[t - 1]);
    const double coef = (1.0 - sched.alpha[t - 1]) / std::sqrt(1.0 - sched.alpha_bar_at(t));
    const double sig = t == 1 ? 0.0 : sched.sigma[t - 1]; // no noise at the final step
    const bool noisy = sig > 0.0 && !z.empty();
    const long n = static_cast<long>(xt.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        double v = inv_sqrt_alpha * (xt[i] - coef * eps_hat[i]);
        if (noisy) v += sig * z[i];
        out[i] = v;
    }
}

void ddim_step(std::span<const double> xt, std::span<const double> eps_hat, int t, int t_prev,
               double eta, std::span<const double> z, const NoiseSchedule& sched,
               std::span<double> out) {
    check_t(t, sched);
    if (t_prev >= t || t_prev < 0) throw parameter_error("ddim needs 0 <= t_prev < t");
    if (eta < 0.0 || eta > 1.0) throw parameter_error("eta must lie in [0, 1]");

    const double ab = sched.alpha_bar_at(t);
    const double ab_prev = sched.alpha_bar_at(t_prev);
    const double sig = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
    const double dir2 = 1.0 - ab_prev - sig * sig;
    if (dir2 < -1e-12) throw numeric_error("ddim sigma exceeds the schedule variance");
    const double dir = std::sqrt(std::max(0.0, dir2));

    const double inv_a = 1.0 / std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    const double a_prev = std::sqrt(ab_prev);
    const bool noisy = sig > 0.0 && !z.empty();
    const long n = static_cast<long>(xt.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        const double x0 = inv_a * (xt[i] - b * eps_hat[i]);
        double v = a_prev * x0 + dir * eps_hat[i];
        if (noisy) v += sig * z[i];
        out[i] = v;
    }
}

} // namespace qsm

#pragma once

#include <span>
#include <vector>

#include "qsm/kernels.hpp"

namespace qsm {

enum class ScheduleKind { linear };

/// DDPM noise schedule tables over steps t = 1..T (stored 0-based:
/// beta[t-1] is the step-t value). alpha_bar is strictly decreasing and
/// alpha_bar_at(0) == 1 so formulas extend to the final step.
struct NoiseSchedule {
    int steps = 0; // T
    double beta_start = 0.0, beta_end = 0.0;
    std::vector<double> beta, alpha, alpha_bar;
    std::vector<double> sigma; // ancestral sampling std per step

    double alpha_bar_at(int t) const { return t <= 0 ? 1.0 : alpha_bar[t - 1]; }
};

NoiseSchedule make_schedule(int T, double beta_start, double beta_end,
                            ScheduleKind kind = ScheduleKind::linear);

/// Uniformly spaced timestep subset for accelerated sampling, descending from
/// T to 1, at most `count` entries.
std::vector<int> ddim_timesteps(int T, int count);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
void q_sample(std::span<const double> x0, std::span<const double> eps, int t,
              const NoiseSchedule& sched, std::span<double> out);

// x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
void predict_x0(std::span<const double> xt, std::span<const double> eps_hat, int t,
                const NoiseSchedule& sched, std::span<double> out);

// Ancestral step; z may be empty (treated as zero) and is ignored at t == 1.
void ddpm_step(std::span<const double> xt, std::span<const double> eps_hat, int t,
               std::span<const double> z, const NoiseSchedule& sched, std::span<double> out);

// DDIM transition t -> t_prev (t_prev < t, t_prev == 0 allowed); eta == 0 is
// deterministic and z may be empty.
void ddim_step(std::span<const double> xt, std::span<const double> eps_hat, int t, int t_prev,
               double eta, std::span<const double> z, const NoiseSchedule& sched,
               std::span<double> out);

} // namespace qsm

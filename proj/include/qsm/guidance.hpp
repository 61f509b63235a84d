#pragma once

#include "qsm/denoiser.hpp"
#include "qsm/dipole.hpp"
#include "qsm/model.hpp"
#include "qsm/resample.hpp"

namespace qsm {

enum class JacobianMode { frozen, exact };

struct GuidanceConfig {
    double xi1 = 10.0;           // field-consistency weight
    double xi2 = 2.5;            // initial-estimate translation weight
    double lambda = 0.1;         // total-variation weight
    double tkd_threshold = 0.1;
    double tv_epsilon = 1e-6;
    int ddim_steps = 200;
    double eta = 0.0;
    JacobianMode jacobian_mode = JacobianMode::frozen;
    bool normalize_gradients = false; // off by default: gradients applied as written
};

/// Everything the guider needs: the measured local field, its dipole kernel,
/// the TKD initial estimate, and the resampling descriptor S. S maps the
/// (possibly padded) model grid to the measurement grid: center-crop
/// model_dims -> core_dims, then trilinear core_dims -> phi.dims.
struct Measurement {
    Volume phi;          // local field, ppm
    DipoleKernel kernel; // at measurement resolution
    Volume x_tkd;        // ppm, measurement grid
    Dims3 model_dims{0, 0, 0};
    Dims3 core_dims{0, 0, 0};
};

// Computes x_tkd from (phi, kernel, threshold) and validates shapes.
Measurement make_measurement(Volume phi, DipoleKernel kernel, double tkd_threshold,
                             const Dims3& core_dims, const Dims3& model_dims);

// Model grid covering the measurement's physical extent at model_voxel mm.
Dims3 model_grid_dims(const Dims3& meas_dims, const std::array<double, 3>& meas_voxel,
                      const std::array<double, 3>& model_voxel);

// S and its exact adjoint.
Volume apply_resampling(const Volume& x_model, const Measurement& meas);
Volume apply_resampling_adjoint(const Volume& y_meas, const Measurement& meas);

struct LossGrad {
    double loss = 0.0;
    Volume grad; // w.r.t. the model-grid input
};

/// || phi - F^-1 D F S x0_hat ||^2 over the measurement mask, with
/// grad = -2 S^T F^-1 D F (phi - F^-1 D F S x0_hat). x0_hat in ppm on the
/// model grid.
LossGrad dipinv_loss_grad(const Volume& x0_hat, const Measurement& meas);

/// || x_tkd - S x0_hat ||^2 over the measurement mask, grad = -2 S^T (x_tkd - S x0_hat).
LossGrad trans_loss_grad(const Volume& x0_hat, const Measurement& meas);

/// Smoothed isotropic total variation sum_v sqrt(sum_axes diff^2 + eps^2)
/// with forward differences and replicate boundary; exact gradient.
LossGrad tv_loss_grad(const Volume& x0_hat, double epsilon);

struct StepDiag {
    int t = 0;
    double dipinv = 0.0, trans = 0.0, tv = 0.0;
};

/// One conditional update: x_bar_{t-1} = x_{t-1} - xi1 grad DipInv
/// - xi2 grad Trans - lambda grad TV, gradients taken w.r.t. x_t. Frozen mode
/// treats eps_hat as constant in x_t (grad scaled by 1/sqrt(abar_t)); exact
/// mode additionally routes the denoiser VJP through the patch assembly
/// adjoint.
Volume conditional_step(const Volume& x_t, const Volume& x_prev_uncond, const Volume& eps_full,
                        int t, const Measurement& meas, const GuidanceConfig& cfg,
                        const Denoiser& den, const PatchLayout& layout, const NoiseSchedule& sched,
                        double chi_scale, StepDiag* diag = nullptr);

struct SampleResult {
    Volume x0;                   // ppm, model grid (padded; crop to core_dims)
    std::vector<StepDiag> trace; // one entry per sampling step
};

/// Full guided sampling loop: x_T ~ N(0, I), then per DDIM step
/// patch-denoise -> unconditional step -> x0 prediction -> conditional step.
/// Deterministic for eta == 0 and a fixed seed.
SampleResult sample_with_denoiser(const Measurement& meas, const Denoiser& den,
                                  const NoiseSchedule& sched, double chi_scale,
                                  const GuidanceConfig& cfg, const Dims3& patch_size,
                                  const Dims3& overlap, std::uint64_t seed);

SampleResult sample(const Measurement& meas, const DenoiserModel& model, const GuidanceConfig& cfg,
                    const Dims3& patch_size, const Dims3& overlap, std::uint64_t seed);

} // namespace qsm

#pragma once

#include <memory>

#include "qsm/patch.hpp"
#include "qsm/schedule.hpp"
#include "qsm/volume.hpp"

namespace qsm {

/// Noise-prediction contract: eps_hat = predict(x_t, t), same shape as the
/// input, deterministic for fixed inputs. Implementations that can provide
/// the exact input Jacobian-vector product expose it through input_vjp;
/// others report no capability and run in frozen guidance mode only.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual void predict(std::span<const double> x, const Dims3& dims, int t,
                         std::span<double> eps_out) const = 0;

    virtual bool has_input_vjp() const { return false; }

    // out = u^T (d eps_hat / d x) for cotangent u; throws capability_error by
    // default.
    virtual void input_vjp(std::span<const double> x, const Dims3& dims, int t,
                           std::span<const double> cotangent, std::span<double> out) const;
};

/// Exact conditional-expectation noise predictor for an i.i.d. N(mean, std^2)
/// per-voxel prior:
///   eps_hat(x_t, t) = sqrt(1-abar_t) (x_t - sqrt(abar_t) mean)
///                     / (abar_t std^2 + 1 - abar_t).
/// Its input Jacobian is the scalar sqrt(1-abar_t)/(abar_t std^2 + 1-abar_t)
/// times identity; used as the analytic oracle for the sampling machinery.
class GaussianDenoiser : public Denoiser {
public:
    GaussianDenoiser(double mean, double stddev, NoiseSchedule sched);

    void predict(std::span<const double> x, const Dims3& dims, int t,
                 std::span<double> eps_out) const override;
    bool has_input_vjp() const override { return true; }
    void input_vjp(std::span<const double> x, const Dims3& dims, int t,
                   std::span<const double> cotangent, std::span<double> out) const override;

    double jacobian_scale(int t) const; // d eps_hat / d x_t
    double mean() const { return mean_; }
    double stddev() const { return std_; }

private:
    double mean_;
    double std_;
    NoiseSchedule sched_;
};

std::unique_ptr<Denoiser> gaussian_denoiser(double mean, double stddev, const NoiseSchedule& sched);

/// Full-volume noise prediction: extract patches, run the denoiser on each,
/// reassemble with crop-mask normalization.
Volume patch_denoise_step(const Volume& x_t, const PatchLayout& layout, const Denoiser& den, int t);

/// Adjoint of patch_denoise_step in its input: routes the cotangent through
/// the crop-mask division, per-patch denoiser VJPs, and the scatter-add that
/// is adjoint to extraction.
Volume patch_denoise_vjp(const Volume& x_t, const PatchLayout& layout, const Denoiser& den, int t,
                         const Volume& cotangent);

} // namespace qsm

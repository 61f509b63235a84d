#include "qsm/guidance.hpp"

#include <cmath>

#include "qsm/errors.hpp"
#include "qsm/rng.hpp"

namespace qsm {

Dims3 model_grid_dims(const Dims3& meas_dims, const std::array<double, 3>& meas_voxel,
                      const std::array<double, 3>& model_voxel) {
    Dims3 out;
    for (int i = 0; i < 3; ++i) {
        if (!(model_voxel[i] > 0.0)) throw parameter_error("model voxel size must be positive");
        out[i] = std::max(1, static_cast<int>(std::lround(meas_dims[i] * meas_voxel[i] / model_voxel[i])));
    }
    return out;
}

Measurement make_measurement(Volume phi, DipoleKernel kernel, double tkd_threshold,
                             const Dims3& core_dims, const Dims3& model_dims) {
    if (phi.dims != kernel.dims) throw parameter_error("field and kernel dims differ");
    for (int i = 0; i < 3; ++i) {
        if (core_dims[i] <= 0 || model_dims[i] < core_dims[i])
            throw parameter_error("need model_dims >= core_dims > 0");
    }
    Measurement m;
    m.x_tkd = tkd_invert(phi, kernel, tkd_threshold);
    m.phi = std::move(phi);
    m.kernel = std::move(kernel);
    m.core_dims = core_dims;
    m.model_dims = model_dims;
    return m;
}

Volume apply_resampling(const Volume& x_model, const Measurement& meas) {
    if (x_model.dims != meas.model_dims) throw parameter_error("input is not on the model grid");
    return resample_trilinear(crop_center(x_model, meas.core_dims), meas.phi.dims);
}

Volume apply_resampling_adjoint(const Volume& y_meas, const Measurement& meas) {
    if (y_meas.dims != meas.phi.dims) throw parameter_error("input is not on the measurement grid");
    return pad_center(resample_adjoint(y_meas, meas.core_dims), meas.model_dims);
}

namespace {

void apply_mask(Volume& v, const Volume& ref) {
    if (!ref.has_mask()) return;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!ref.mask[i]) v.data[i] = 0.0;
}

} // namespace

LossGrad dipinv_loss_grad(const Volume& x0_hat, const Measurement& meas) {
    const Volume sx = apply_resampling(x0_hat, meas);
    Volume r = forward_field(sx, meas.kernel);
    for (std::size_t i = 0; i < r.size(); ++i) r.data[i] = meas.phi.data[i] - r.data[i];
    apply_mask(r, meas.phi);

    LossGrad out;
    out.loss = kernels::det_sumsq(r.data);
    Volume ar = forward_field(r, meas.kernel); // D is real and even: the operator is self-adjoint
    out.grad = apply_resampling_adjoint(ar, meas);
    for (double& g : out.grad.data) g *= -2.0;
    return out;
}

LossGrad trans_loss_grad(const Volume& x0_hat, const Measurement& meas) {
    const Volume sx = apply_resampling(x0_hat, meas);
    Volume r = meas.x_tkd;
    for (std::size_t i = 0; i < r.size(); ++i) r.data[i] -= sx.data[i];
    apply_mask(r, meas.phi);

    LossGrad out;
    out.loss = kernels::det_sumsq(r.data);
    out.grad = apply_resampling_adjoint(r, meas);
    for (double& g : out.grad.data) g *= -2.0;
    return out;
}

LossGrad tv_loss_grad(const Volume& x0_hat, double epsilon) {
    if (!(epsilon > 0.0)) throw parameter_error("tv epsilon must be positive");
    const Dims3 d = x0_hat.dims;
    const int nx = d[0], ny = d[1], nz = d[2];
    const double e2 = epsilon * epsilon;
    const auto& x = x0_hat.data;

    // s(v) = sqrt(dx^2 + dy^2 + dz^2 + eps^2), forward differences, replicate
    // boundary (zero difference at the far face)
    std::vector<double> s(x.size());
    std::vector<double> plane_sum(nz, 0.0);
#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        double acc = 0.0;
        for (int y = 0; y < ny; ++y)
            for (int xx = 0; xx < nx; ++xx) {
                const std::size_t i = flat_index(d, xx, y, z);
                const double dx = xx + 1 < nx ? x[i + 1] - x[i] : 0.0;
                const double dy = y + 1 < ny ? x[i + nx] - x[i] : 0.0;
                const double dz = z + 1 < nz ? x[i + static_cast<std::size_t>(nx) * ny] - x[i] : 0.0;
                const double v = std::sqrt(dx * dx + dy * dy + dz * dz + e2);
                s[i] = v;
                acc += v;
            }
        plane_sum[z] = acc;
    }

    LossGrad out;
    out.loss = 0.0;
    for (double p : plane_sum) out.loss += p;

    out.grad = make_volume(d, x0_hat.voxel_size, x0_hat.b0_dir);
    auto& g = out.grad.data;
#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y)
            for (int xx = 0; xx < nx; ++xx) {
                const std::size_t i = flat_index(d, xx, y, z);
                const std::size_t sy = static_cast<std::size_t>(nx);
                const std::size_t sz = static_cast<std::size_t>(nx) * ny;
                double acc = 0.0;
                // own differences pull this voxel toward its forward neighbors
                const double dx = xx + 1 < nx ? x[i + 1] - x[i] : 0.0;
                const double dy = y + 1 < ny ? x[i + sy] - x[i] : 0.0;
                const double dz = z + 1 < nz ? x[i + sz] - x[i] : 0.0;
                acc -= (dx + dy + dz) / s[i];
                // backward neighbors whose forward difference ends here
                if (xx > 0) acc += (x[i] - x[i - 1]) / s[i - 1];
                if (y > 0) acc += (x[i] - x[i - sy]) / s[i - sy];
                if (z > 0) acc += (x[i] - x[i - sz]) / s[i - sz];
                g[i] = acc;
            }
    }
    return out;
}

Volume conditional_step(const Volume& x_t, const Volume& x_prev_uncond, const Volume& eps_full,
                        int t, const Measurement& meas, const GuidanceConfig& cfg,
                        const Denoiser& den, const PatchLayout& layout, const NoiseSchedule& sched,
                        double chi_scale, StepDiag* diag) {
    const bool want_dip = cfg.xi1 > 0.0;
    const bool want_trans = cfg.xi2 > 0.0;
    const bool want_tv = cfg.lambda > 0.0;
    if (!want_dip && !want_trans && !want_tv && !diag) return x_prev_uncond;

    if (cfg.jacobian_mode == JacobianMode::exact && !den.has_input_vjp())
        throw capability_error("exact jacobian mode needs a denoiser with an input VJP");

    // x0_hat in ppm on the model grid
    Volume x0_hat = x_t;
    predict_x0(x_t.data, eps_full.data, t, sched, x0_hat.data);
    for (double& v : x0_hat.data) v *= chi_scale;

    Volume u = make_volume(x_t.dims, x_t.voxel_size, x_t.b0_dir); // combined cotangent, ppm space
    StepDiag sd;
    sd.t = t;

    auto accumulate = [&](const LossGrad& lg, double weight) {
        double w = weight;
        if (cfg.normalize_gradients && lg.loss > 0.0) w /= std::sqrt(lg.loss);
        for (std::size_t i = 0; i < u.size(); ++i) u.data[i] += w * lg.grad.data[i];
    };

    if (want_dip || diag) {
        const LossGrad lg = dipinv_loss_grad(x0_hat, meas);
        sd.dipinv = lg.loss;
        if (want_dip) accumulate(lg, cfg.xi1);
    }
    if (want_trans || diag) {
        const LossGrad lg = trans_loss_grad(x0_hat, meas);
        sd.trans = lg.loss;
        if (want_trans) accumulate(lg, cfg.xi2);
    }
    if (want_tv || diag) {
        const LossGrad lg = tv_loss_grad(x0_hat, cfg.tv_epsilon);
        sd.tv = lg.loss;
        // TV is a prior term: never gradient-normalized
        if (want_tv)
            for (std::size_t i = 0; i < u.size(); ++i) u.data[i] += cfg.lambda * lg.grad.data[i];
    }
    if (diag) *diag = sd;
    if (!want_dip && !want_trans && !want_tv) return x_prev_uncond;

    // chain ppm -> model space, then through x0_hat(x_t)
    const double ab = sched.alpha_bar_at(t);
    const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
    for (double& v : u.data) v *= chi_scale;

    Volume grad_xt = u;
    if (cfg.jacobian_mode == JacobianMode::exact) {
        const Volume vjp = patch_denoise_vjp(x_t, layout, den, t, u);
        const double b = std::sqrt(1.0 - ab);
        for (std::size_t i = 0; i < grad_xt.size(); ++i)
            grad_xt.data[i] = inv_sqrt_ab * (u.data[i] - b * vjp.data[i]);
    } else {
        for (double& v : grad_xt.data) v *= inv_sqrt_ab;
    }

    Volume out = x_prev_uncond;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= grad_xt.data[i];
    return out;
}

SampleResult sample_with_denoiser(const Measurement& meas, const Denoiser& den,
                                  const NoiseSchedule& sched, double chi_scale,
                                  const GuidanceConfig& cfg, const Dims3& patch_size,
                                  const Dims3& overlap, std::uint64_t seed) {
    const Dims3 dims = meas.model_dims;
    const PatchLayout layout = plan_patches(dims, patch_size, overlap);

    // model-grid voxel size: the core covers the measurement's physical extent
    std::array<double, 3> voxel;
    for (int i = 0; i < 3; ++i)
        voxel[i] = meas.phi.voxel_size[i] * meas.phi.dims[i] / meas.core_dims[i];

    Volume x = make_volume(dims, voxel, meas.phi.b0_dir);
    {
        RandomStream init(mix_seed(seed, 0x73616d706c65ull)); // sampling init stream
        init.fill_normal(x.data.data(), x.size());
    }

    const std::vector<int> ts = ddim_timesteps(sched.steps, cfg.ddim_steps);
    SampleResult result;
    result.trace.reserve(ts.size());

    Volume x0_hat = x;
    Volume x_prev = x;
    std::vector<double> z;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const int t = ts[k];
        const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;

        const Volume eps_full = patch_denoise_step(x, layout, den, t);

        z.clear();
        if (cfg.eta > 0.0 && t_prev > 0) {
            z.resize(x.size());
            RandomStream zs(mix_seed(seed, 0x7374657000ull + k));
            zs.fill_normal(z.data(), z.size());
        }
        ddim_step(x.data, eps_full.data, t, t_prev, cfg.eta, z, sched, x_prev.data);
        predict_x0(x.data, eps_full.data, t, sched, x0_hat.data);

        StepDiag diag;
        x = conditional_step(x, x_prev, eps_full, t, meas, cfg, den, layout, sched, chi_scale,
                             &diag);
        result.trace.push_back(diag);
    }

    result.x0 = scaled(x0_hat, chi_scale);
    return result;
}

SampleResult sample(const Measurement& meas, const DenoiserModel& model, const GuidanceConfig& cfg,
                    const Dims3& patch_size, const Dims3& overlap, std::uint64_t seed) {
    const NetDenoiser den(model);
    return sample_with_denoiser(meas, den, model.sched, model.chi_scale, cfg, patch_size, overlap,
                                seed);
}

} // namespace qsm

#include "qsm/denoiser.hpp"

#include <cmath>

#include "qsm/errors.hpp"

namespace qsm {

void Denoiser::input_vjp(std::span<const double>, const Dims3&, int, std::span<const double>,
                         std::span<double>) const {
    throw capability_error("denoiser does not provide an input VJP");
}

GaussianDenoiser::GaussianDenoiser(double mean, double stddev, NoiseSchedule sched)
    : mean_(mean), std_(stddev), sched_(std::move(sched)) {
    if (!(stddev > 0.0)) throw parameter_error("gaussian denoiser needs std > 0");
}

double GaussianDenoiser::jacobian_scale(int t) const {
    const double ab = sched_.alpha_bar_at(t);
    return std::sqrt(1.0 - ab) / (ab * std_ * std_ + 1.0 - ab);
}

void GaussianDenoiser::predict(std::span<const double> x, const Dims3&, int t,
                               std::span<double> eps_out) const {
    const double ab = sched_.alpha_bar_at(t);
    const double k = jacobian_scale(t);
    const double c = std::sqrt(ab) * mean_;
    for (std::size_t i = 0; i < x.size(); ++i) eps_out[i] = k * (x[i] - c);
}

void GaussianDenoiser::input_vjp(std::span<const double>, const Dims3&, int t,
                                 std::span<const double> cotangent, std::span<double> out) const {
    const double k = jacobian_scale(t);
    for (std::size_t i = 0; i < cotangent.size(); ++i) out[i] = k * cotangent[i];
}

std::unique_ptr<Denoiser> gaussian_denoiser(double mean, double stddev, const NoiseSchedule& sched) {
    return std::make_unique<GaussianDenoiser>(mean, stddev, sched);
}

Volume patch_denoise_step(const Volume& x_t, const PatchLayout& layout, const Denoiser& den, int t) {
    if (x_t.dims != layout.volume_dims) throw parameter_error("x_t dims do not match layout");
    std::vector<std::vector<double>> patches = extract(x_t, layout);

    bool failed = false;
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < static_cast<long>(patches.size()); ++i) {
        try {
            std::vector<double> eps(patches[i].size());
            den.predict(patches[i], layout.patch_size, t, eps);
            patches[i] = std::move(eps);
        } catch (...) {
#pragma omp atomic write
            failed = true;
        }
    }
    if (failed) throw numeric_error("denoiser failed on a patch");

    Volume out = assemble(patches, layout);
    out.voxel_size = x_t.voxel_size;
    out.b0_dir = x_t.b0_dir;
    return out;
}

Volume patch_denoise_vjp(const Volume& x_t, const PatchLayout& layout, const Denoiser& den, int t,
                         const Volume& cotangent) {
    if (x_t.dims != layout.volume_dims || cotangent.dims != layout.volume_dims)
        throw parameter_error("dims do not match layout");
    if (!den.has_input_vjp()) throw capability_error("denoiser lacks input VJP");

    // adjoint of the final mask division
    Volume u = cotangent;
    for (std::size_t i = 0; i < u.size(); ++i) u.data[i] /= layout.crop_mask[i];

    std::vector<std::vector<double>> xp = extract(x_t, layout);
    std::vector<std::vector<double>> up = extract(u, layout);

    bool failed = false;
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < static_cast<long>(xp.size()); ++i) {
        try {
            std::vector<double> g(xp[i].size());
            den.input_vjp(xp[i], layout.patch_size, t, up[i], g);
            up[i] = std::move(g);
        } catch (...) {
#pragma omp atomic write
            failed = true;
        }
    }
    if (failed) throw numeric_error("denoiser VJP failed on a patch");

    Volume out = make_volume(layout.volume_dims, x_t.voxel_size, x_t.b0_dir);
    scatter_add(up, layout, out.data); // adjoint of extract
    return out;
}

} // namespace qsm

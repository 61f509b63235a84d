// Timing harness comparing the OpenMP kernels with their serial reference
// implementations, plus the composite operations built on them.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "qsm/dipole.hpp"
#include "qsm/guidance.hpp"
#include "qsm/kernels.hpp"
#include "qsm/parallel.hpp"
#include "qsm/patch.hpp"
#include "qsm/resample.hpp"
#include "qsm/rng.hpp"

using namespace qsm;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void row(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-28s %10.2f ms %10.2f ms %8.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

} // namespace

int main(int argc, char** argv) {
    int n = 32;
    int channels = 16;
    if (argc > 1) n = std::atoi(argv[1]);
    if (argc > 2) channels = std::atoi(argv[2]);
    const Dims3 dims{n, n, n};
    const std::size_t N = volume_of(dims);

    std::printf("volume %d^3, %d channels, %d threads available\n", n, channels,
                par::max_threads());
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    RandomStream rng(1);
    std::vector<double> in(N * channels), w(static_cast<std::size_t>(channels) * channels * 27),
        bias(channels), out(N * channels);
    for (double& v : in) v = rng.normal();
    for (double& v : w) v = 0.1 * rng.normal();
    for (double& v : bias) v = rng.normal();

    row("conv3 forward",
        time_ms([&] { ref::conv3_forward(in.data(), channels, dims, w.data(), bias.data(),
                                         channels, out.data()); },
                2),
        time_ms([&] { kernels::conv3_forward(in.data(), channels, dims, w.data(), bias.data(),
                                             channels, out.data()); },
                2));

    std::vector<double> gw(w.size()), gb(channels);
    row("conv3 weight grad",
        time_ms([&] { ref::conv3_weight_grad(in.data(), channels, dims, out.data(), channels,
                                             gw.data(), gb.data()); },
                2),
        time_ms([&] { kernels::conv3_weight_grad(in.data(), channels, dims, out.data(), channels,
                                                 gw.data(), gb.data()); },
                2));

    std::vector<double> big(N * channels);
    for (double& v : big) v = rng.normal();
    volatile double sink = 0.0;
    row("sum reduction",
        time_ms([&] { sink = ref::sum(big); }, 20),
        time_ms([&] { sink = kernels::det_sum(big); }, 20));
    (void)sink;

    Volume v = make_volume(dims);
    for (double& x : v.data) x = rng.normal();
    PatchLayout layout = plan_patches(dims, {n / 2, n / 2, n / 2}, {n / 8, n / 8, n / 8});
    auto patches = extract(v, layout);
    {
        // serial assemble = one-thread run of the same deterministic kernel
        const int saved = par::max_threads();
        double s_ms, p_ms;
        par::set_threads(1);
        s_ms = time_ms([&] { assemble(patches, layout); }, 5);
        par::set_threads(saved);
        p_ms = time_ms([&] { assemble(patches, layout); }, 5);
        row("patch assemble", s_ms, p_ms);

        par::set_threads(1);
        s_ms = time_ms([&] { resample_trilinear(v, {n / 2, n / 2, n / 2}); }, 5);
        par::set_threads(saved);
        p_ms = time_ms([&] { resample_trilinear(v, {n / 2, n / 2, n / 2}); }, 5);
        row("trilinear resample", s_ms, p_ms);

        par::set_threads(1);
        s_ms = time_ms([&] { tv_loss_grad(v, 1e-6); }, 5);
        par::set_threads(saved);
        p_ms = time_ms([&] { tv_loss_grad(v, 1e-6); }, 5);
        row("tv loss+grad", s_ms, p_ms);

        DipoleKernel D = dipole_kernel(dims, {1, 1, 1}, {0, 0, 1});
        par::set_threads(1);
        s_ms = time_ms([&] { forward_field(v, D); }, 5);
        par::set_threads(saved);
        p_ms = time_ms([&] { forward_field(v, D); }, 5);
        row("dipole forward (fft)", s_ms, p_ms);
    }
    return 0;
}

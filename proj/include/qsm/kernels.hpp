#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace qsm {

using Dims3 = std::array<int, 3>; // {nx, ny, nz}, x fastest in memory

inline std::size_t volume_of(const Dims3& d) {
    return static_cast<std::size_t>(d[0]) * d[1] * d[2];
}

inline std::size_t flat_index(const Dims3& d, int x, int y, int z) {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(d[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(d[1]) * z);
}

// OpenMP-parallel kernels. Every kernel is gather-form: each output element is
// produced by exactly one loop iteration with a fixed-order inner sum, so
// results are bit-identical for any thread count.
namespace kernels {

// 3x3x3 convolution over channels-first volumes [c][z][y][x], zero padding.
// Weights are laid out w[oc][ic][dz][dy][dx] (27 taps), one bias per oc.
void conv3_forward(const double* in, int cin, const Dims3& dims,
                   const double* w, const double* bias, int cout, double* out);

// gw has the same layout as w; gb one entry per oc. Overwrites outputs.
void conv3_weight_grad(const double* in, int cin, const Dims3& dims,
                       const double* gout, int cout, double* gw, double* gb);

// Builds the weight tensor that turns conv3_forward into the input-gradient
// pass: wt[ic][oc][dz][dy][dx] = w[oc][ic][2-dz][2-dy][2-dx].
void conv3_flip_transpose(const double* w, int cout, int cin, double* wt);

// Thread-count-invariant reductions: fixed 4096-element chunks summed
// serially in order.
double det_sum(std::span<const double> a);
double det_dot(std::span<const double> a, std::span<const double> b);
double det_sumsq(std::span<const double> a);

// out = a + s*b
void axpy(std::span<const double> a, double s, std::span<const double> b, std::span<double> out);
void scale(std::span<const double> a, double s, std::span<double> out);

} // namespace kernels

// Naive serial implementations kept as the reference for the OpenMP kernels.
// Clarity over speed; used by tests and the bench tool only.
namespace ref {

void conv3_forward(const double* in, int cin, const Dims3& dims,
                   const double* w, const double* bias, int cout, double* out);
void conv3_weight_grad(const double* in, int cin, const Dims3& dims,
                       const double* gout, int cout, double* gw, double* gb);
double sum(std::span<const double> a);

} // namespace ref

} // namespace qsm

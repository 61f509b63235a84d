#include "qsm/kernels.hpp"

#include <algorithm>
#include <cstring>

namespace qsm::kernels {

namespace {

// One output plane (fixed oc, fixed z). Accumulation order per output element
// is (ic, dz, dy, dx) regardless of how the outer loops are scheduled.
void conv3_plane(const double* in, int cin, const Dims3& dims,
                 const double* w_oc, double bias, int z, double* out_plane) {
    const int nx = dims[0], ny = dims[1], nz = dims[2];
    const std::size_t plane = static_cast<std::size_t>(nx) * ny;
    const std::size_t chan = plane * nz;

    for (std::size_t i = 0; i < plane; ++i) out_plane[i] = bias;

    for (int ic = 0; ic < cin; ++ic) {
        const double* in_c = in + static_cast<std::size_t>(ic) * chan;
        const double* w_ic = w_oc + static_cast<std::size_t>(ic) * 27;
        for (int dz = 0; dz < 3; ++dz) {
            const int sz = z + dz - 1;
            if (sz < 0 || sz >= nz) continue;
            const double* in_z = in_c + static_cast<std::size_t>(sz) * plane;
            for (int dy = 0; dy < 3; ++dy) {
                const double w0 = w_ic[dz * 9 + dy * 3 + 0];
                const double w1 = w_ic[dz * 9 + dy * 3 + 1];
                const double w2 = w_ic[dz * 9 + dy * 3 + 2];
                for (int y = 0; y < ny; ++y) {
                    const int sy = y + dy - 1;
                    if (sy < 0 || sy >= ny) continue;
                    const double* row = in_z + static_cast<std::size_t>(sy) * nx;
                    double* acc = out_plane + static_cast<std::size_t>(y) * nx;
                    // one fused sweep per row; per element the taps still add
                    // in dx order (left-associated sum)
                    if (nx == 1) {
                        acc[0] += w1 * row[0];
                        continue;
                    }
                    acc[0] += w1 * row[0] + w2 * row[1];
                    for (int x = 1; x < nx - 1; ++x)
                        acc[x] += w0 * row[x - 1] + w1 * row[x] + w2 * row[x + 1];
                    acc[nx - 1] += w0 * row[nx - 2] + w1 * row[nx - 1];
                }
            }
        }
    }
}

} // namespace

void conv3_forward(const double* in, int cin, const Dims3& dims,
                   const double* w, const double* bias, int cout, double* out) {
    const int nz = dims[2];
    const std::size_t plane = static_cast<std::size_t>(dims[0]) * dims[1];
    const std::size_t chan = plane * nz;

#pragma omp parallel for collapse(2) schedule(static)
    for (int oc = 0; oc < cout; ++oc) {
        for (int z = 0; z < nz; ++z) {
            conv3_plane(in, cin, dims,
                        w + static_cast<std::size_t>(oc) * cin * 27, bias ? bias[oc] : 0.0,
                        z, out + static_cast<std::size_t>(oc) * chan + static_cast<std::size_t>(z) * plane);
        }
    }
}

namespace {

// All 27 tap gradients of one (oc, ic) pair in a single volume pass, each
// accumulated in fixed (z, y, x) order.
void wgrad_pair(const double* in_c, const double* gout_c, const Dims3& dims, double* acc27) {
    const int nx = dims[0], ny = dims[1], nz = dims[2];
    const std::size_t plane = static_cast<std::size_t>(nx) * ny;

    double acc[27] = {0.0};
    for (int z = 0; z < nz; ++z) {
        for (int dz = 0; dz < 3; ++dz) {
            const int sz = z + dz - 1;
            if (sz < 0 || sz >= nz) continue;
            for (int y = 0; y < ny; ++y) {
                const double* g = gout_c + static_cast<std::size_t>(z) * plane +
                                  static_cast<std::size_t>(y) * nx;
                for (int dy = 0; dy < 3; ++dy) {
                    const int sy = y + dy - 1;
                    if (sy < 0 || sy >= ny) continue;
                    const double* s = in_c + static_cast<std::size_t>(sz) * plane +
                                      static_cast<std::size_t>(sy) * nx;
                    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                    for (int x = 1; x < nx; ++x) a0 += g[x] * s[x - 1];
                    for (int x = 0; x < nx; ++x) a1 += g[x] * s[x];
                    for (int x = 0; x < nx - 1; ++x) a2 += g[x] * s[x + 1];
                    acc[dz * 9 + dy * 3 + 0] += a0;
                    acc[dz * 9 + dy * 3 + 1] += a1;
                    acc[dz * 9 + dy * 3 + 2] += a2;
                }
            }
        }
    }
    for (int t = 0; t < 27; ++t) acc27[t] = acc[t];
}

} // namespace

void conv3_weight_grad(const double* in, int cin, const Dims3& dims,
                       const double* gout, int cout, double* gw, double* gb) {
    const std::size_t chan = volume_of(dims);
    const long pairs = static_cast<long>(cout) * cin;

#pragma omp parallel for schedule(static)
    for (long k = 0; k < pairs; ++k) {
        const int oc = static_cast<int>(k / cin);
        const int ic = static_cast<int>(k % cin);
        wgrad_pair(in + static_cast<std::size_t>(ic) * chan,
                   gout + static_cast<std::size_t>(oc) * chan, dims,
                   gw + static_cast<std::size_t>(k) * 27);
    }

#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < cout; ++oc) {
        const double* g = gout + static_cast<std::size_t>(oc) * chan;
        double acc = 0.0;
        for (std::size_t i = 0; i < chan; ++i) acc += g[i];
        gb[oc] = acc;
    }
}

void conv3_flip_transpose(const double* w, int cout, int cin, double* wt) {
    for (int ic = 0; ic < cin; ++ic)
        for (int oc = 0; oc < cout; ++oc)
            for (int tap = 0; tap < 27; ++tap) {
                const int dz = tap / 9, dy = (tap / 3) % 3, dx = tap % 3;
                const int src = ((oc * cin) + ic) * 27 + (2 - dz) * 9 + (2 - dy) * 3 + (2 - dx);
                wt[((ic * cout) + oc) * 27 + tap] = w[src];
            }
}

namespace {
constexpr std::size_t kChunk = 4096;
}

double det_sum(std::span<const double> a) {
    const std::size_t n = a.size();
    const std::size_t nchunk = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunk, 0.0);
#pragma omp parallel for schedule(static)
    for (long c = 0; c < static_cast<long>(nchunk); ++c) {
        const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
        const std::size_t hi = std::min(n, lo + kChunk);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += a[i];
        partial[c] = acc;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

double det_dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    const std::size_t nchunk = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunk, 0.0);
#pragma omp parallel for schedule(static)
    for (long c = 0; c < static_cast<long>(nchunk); ++c) {
        const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
        const std::size_t hi = std::min(n, lo + kChunk);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += a[i] * b[i];
        partial[c] = acc;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

double det_sumsq(std::span<const double> a) { return det_dot(a, a); }

void axpy(std::span<const double> a, double s, std::span<const double> b, std::span<double> out) {
    const long n = static_cast<long>(a.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out[i] = a[i] + s * b[i];
}

void scale(std::span<const double> a, double s, std::span<double> out) {
    const long n = static_cast<long>(a.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out[i] = s * a[i];
}

} // namespace qsm::kernels

namespace qsm::ref {

void conv3_forward(const double* in, int cin, const Dims3& dims,
                   const double* w, const double* bias, int cout, double* out) {
    const int nx = dims[0], ny = dims[1], nz = dims[2];
    const std::size_t chan = volume_of(dims);
    for (int oc = 0; oc < cout; ++oc)
        for (int z = 0; z < nz; ++z)
            for (int y = 0; y < ny; ++y)
                for (int x = 0; x < nx; ++x) {
                    double acc = bias ? bias[oc] : 0.0;
                    for (int ic = 0; ic < cin; ++ic)
                        for (int dz = 0; dz < 3; ++dz)
                            for (int dy = 0; dy < 3; ++dy)
                                for (int dx = 0; dx < 3; ++dx) {
                                    const int sz = z + dz - 1, sy = y + dy - 1, sx = x + dx - 1;
                                    if (sx < 0 || sx >= nx || sy < 0 || sy >= ny || sz < 0 || sz >= nz)
                                        continue;
                                    acc += w[((oc * cin + ic) * 27) + dz * 9 + dy * 3 + dx] *
                                           in[static_cast<std::size_t>(ic) * chan + flat_index(dims, sx, sy, sz)];
                                }
                    out[static_cast<std::size_t>(oc) * chan + flat_index(dims, x, y, z)] = acc;
                }
}

void conv3_weight_grad(const double* in, int cin, const Dims3& dims,
                       const double* gout, int cout, double* gw, double* gb) {
    const int nx = dims[0], ny = dims[1], nz = dims[2];
    const std::size_t chan = volume_of(dims);
    for (int oc = 0; oc < cout; ++oc) {
        for (int ic = 0; ic < cin; ++ic)
            for (int tap = 0; tap < 27; ++tap) {
                const int dz = tap / 9, dy = (tap / 3) % 3, dx = tap % 3;
                double acc = 0.0;
                for (int z = 0; z < nz; ++z)
                    for (int y = 0; y < ny; ++y)
                        for (int x = 0; x < nx; ++x) {
                            const int sz = z + dz - 1, sy = y + dy - 1, sx = x + dx - 1;
                            if (sx < 0 || sx >= nx || sy < 0 || sy >= ny || sz < 0 || sz >= nz)
                                continue;
                            acc += gout[static_cast<std::size_t>(oc) * chan + flat_index(dims, x, y, z)] *
                                   in[static_cast<std::size_t>(ic) * chan + flat_index(dims, sx, sy, sz)];
                        }
                gw[(oc * cin + ic) * 27 + tap] = acc;
            }
        double acc = 0.0;
        for (std::size_t i = 0; i < chan; ++i) acc += gout[static_cast<std::size_t>(oc) * chan + i];
        gb[oc] = acc;
    }
}

double sum(std::span<const double> a) {
    double acc = 0.0;
    for (double v : a) acc += v;
    return acc;
}

} // namespace qsm::ref

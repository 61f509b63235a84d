#include "qsm/dipole.hpp"

#include <cmath>

#include "qsm/errors.hpp"
#include "qsm/fft3.hpp"
#include "qsm/rng.hpp"

namespace qsm {

namespace {

// fftfreq-style index: 0, 1, ..., N/2-1, -N/2, ..., -1 (cycles per sample)
inline int freq_index(int i, int n) { return i <= (n - 1) / 2 ? i : i - n; }

// The Nyquist bin of an even-length axis stands for both +N/2 and -N/2; a
// one-sided choice breaks D(k) = D(-k) under the grid's modular negation for
// tilted b0. Averaging over the sign choices keeps the filter real-even.
inline bool is_nyquist(int i, int n) { return n % 2 == 0 && i == n / 2; }

double dipole_value(const std::array<double, 3>& k, const std::array<double, 3>& b0) {
    const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    if (k2 <= 0.0) return 0.0; // k = 0 stays 0 by convention
    const double kb = k[0] * b0[0] + k[1] * b0[1] + k[2] * b0[2];
    return 1.0 / 3.0 - (kb * kb) / k2;
}

} // namespace

DipoleKernel dipole_kernel(const Dims3& dims, const std::array<double, 3>& voxel_size,
                           const std::array<double, 3>& b0_dir) {
    for (int i = 0; i < 3; ++i) {
        if (dims[i] <= 0) throw parameter_error("kernel dims must be positive");
        if (!(voxel_size[i] > 0.0)) throw parameter_error("voxel size must be positive");
    }
    const double n2 = b0_dir[0] * b0_dir[0] + b0_dir[1] * b0_dir[1] + b0_dir[2] * b0_dir[2];
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6) throw parameter_error("b0_dir must be a unit vector");

    DipoleKernel D;
    D.dims = dims;
    D.voxel_size = voxel_size;
    D.b0_dir = b0_dir;
    D.values.resize(volume_of(dims));

    const int nx = dims[0], ny = dims[1], nz = dims[2];
#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        const double kz = freq_index(z, nz) / (nz * voxel_size[2]);
        const bool nyq_z = is_nyquist(z, nz);
        for (int y = 0; y < ny; ++y) {
            const double ky = freq_index(y, ny) / (ny * voxel_size[1]);
            const bool nyq_y = is_nyquist(y, ny);
            for (int x = 0; x < nx; ++x) {
                const double kx = freq_index(x, nx) / (nx * voxel_size[0]);
                const bool nyq_x = is_nyquist(x, nx);

                double d = 0.0;
                int count = 0;
                for (int sx = 0; sx < (nyq_x ? 2 : 1); ++sx)
                    for (int sy = 0; sy < (nyq_y ? 2 : 1); ++sy)
                        for (int sz = 0; sz < (nyq_z ? 2 : 1); ++sz) {
                            const std::array<double, 3> k{sx ? -kx : kx, sy ? -ky : ky,
                                                          sz ? -kz : kz};
                            d += dipole_value(k, b0_dir);
                            ++count;
                        }
                D.values[flat_index(dims, x, y, z)] = d / count;
            }
        }
    }
    return D;
}

Volume forward_field(const Volume& chi, const DipoleKernel& D) {
    if (chi.dims != D.dims) throw parameter_error("chi dims do not match kernel dims");

    std::vector<std::complex<double>> buf(chi.size());
    for (std::size_t i = 0; i < chi.size(); ++i) buf[i] = chi.data[i];
    fft::forward(buf, chi.dims);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= D.values[i];
    fft::inverse(buf, chi.dims);

    Volume phi = chi;
    phi.mask.clear(); // the field is not confined to the source support
    double max_re = 0.0, max_im = 0.0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
        phi.data[i] = buf[i].real();
        max_re = std::max(max_re, std::abs(buf[i].real()));
        max_im = std::max(max_im, std::abs(buf[i].imag()));
    }
    if (max_im > 1e-5 * std::max(max_re, 1e-300))
        throw numeric_error("forward_field imaginary residue too large");
    return phi;
}

Volume add_noise(const Volume& phi, const NoiseSpec& spec) {
    if (spec.sigma == 0.0) return phi;
    Volume out = phi;
    RandomStream rng(mix_seed(spec.seed, 0x6e6f697365ull)); // "noise" stream
    for (double& x : out.data) x += spec.sigma * rng.normal();
    return out;
}

Volume tkd_invert(const Volume& phi, const DipoleKernel& D, double threshold) {
    if (!(threshold > 0.0)) throw parameter_error("TKD threshold must be positive");
    if (phi.dims != D.dims) throw parameter_error("field dims do not match kernel dims");

    std::vector<std::complex<double>> buf(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) buf[i] = phi.data[i];
    fft::forward(buf, phi.dims);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const double d = D.values[i];
        double dp = d;
        if (std::abs(d) < threshold) dp = d < 0.0 ? -threshold : threshold; // sign(0) := +1
        buf[i] /= dp;
    }
    fft::inverse(buf, phi.dims);

    Volume chi = phi;
    for (std::size_t i = 0; i < buf.size(); ++i) chi.data[i] = buf[i].real();
    if (phi.has_mask())
        for (std::size_t i = 0; i < chi.size(); ++i)
            if (!phi.mask[i]) chi.data[i] = 0.0;
    return chi;
}

} // namespace qsm

#include "qsm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qsm/errors.hpp"

namespace qsm::metrics {

namespace {

void check_shapes(const Volume& pred, const Volume& ref, const std::vector<std::uint8_t>& mask) {
    if (pred.dims != ref.dims) throw parameter_error("metric inputs must share dims");
    if (!mask.empty() && mask.size() != ref.size())
        throw parameter_error("mask length does not match volumes");
}

bool in_mask(const std::vector<std::uint8_t>& mask, std::size_t i) {
    return mask.empty() || mask[i] != 0;
}

std::size_t mask_count(const std::vector<std::uint8_t>& mask, std::size_t n) {
    if (mask.empty()) return n;
    std::size_t c = 0;
    for (std::uint8_t m : mask) c += m ? 1 : 0;
    return c;
}

double ref_range(const Volume& ref, const std::vector<std::uint8_t>& mask) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (!in_mask(mask, i)) continue;
        lo = std::min(lo, ref.data[i]);
        hi = std::max(hi, ref.data[i]);
    }
    if (!(hi >= lo)) throw parameter_error("metric mask is empty");
    return hi - lo;
}

// Separable Gaussian filtering with per-axis border renormalization.
constexpr int kSsimHalf = 5; // 11-tap window
constexpr double kSsimSigma = 1.5;

std::vector<double> gauss_taps() {
    std::vector<double> g(2 * kSsimHalf + 1);
    double sum = 0.0;
    for (int i = -kSsimHalf; i <= kSsimHalf; ++i) {
        g[i + kSsimHalf] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
        sum += g[i + kSsimHalf];
    }
    for (double& v : g) v /= sum;
    return g;
}

std::vector<double> gauss_filter_axis(const std::vector<double>& in, const Dims3& d, int axis) {
    const std::vector<double> g = gauss_taps();
    std::vector<double> out(in.size());
    const int n = d[axis];
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? static_cast<std::size_t>(d[0])
                                                         : static_cast<std::size_t>(d[0]) * d[1];
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    const std::size_t s1 = a1 == 0 ? 1 : static_cast<std::size_t>(d[0]);
    const std::size_t s2 = a2 == 1 ? static_cast<std::size_t>(d[0])
                                   : static_cast<std::size_t>(d[0]) * d[1];

#pragma omp parallel for collapse(2) schedule(static)
    for (int k2 = 0; k2 < d[a2]; ++k2) {
        for (int k1 = 0; k1 < d[a1]; ++k1) {
            const double* src = in.data() + k1 * s1 + k2 * s2;
            double* dst = out.data() + k1 * s1 + k2 * s2;
            for (int i = 0; i < n; ++i) {
                double acc = 0.0, wsum = 0.0;
                for (int j = -kSsimHalf; j <= kSsimHalf; ++j) {
                    const int p = i + j;
                    if (p < 0 || p >= n) continue;
                    acc += g[j + kSsimHalf] * src[p * stride];
                    wsum += g[j + kSsimHalf];
                }
                dst[i * stride] = acc / wsum;
            }
        }
    }
    return out;
}

std::vector<double> gauss_filter(const std::vector<double>& in, const Dims3& d) {
    std::vector<double> out = gauss_filter_axis(in, d, 0);
    out = gauss_filter_axis(out, d, 1);
    return gauss_filter_axis(out, d, 2);
}

constexpr int kLogHalf = 7; // 15^3 kernel
constexpr double kLogSigma = 1.5;

// Direct convolution with a centered cubic kernel, replicate (clamp) padding
// so a constant volume maps to a constant response everywhere.
std::vector<double> conv_full(const std::vector<double>& in, const Dims3& d,
                              const std::vector<double>& k, int half) {
    const int nx = d[0], ny = d[1], nz = d[2];
    const int len = 2 * half + 1;
    std::vector<double> out(in.size(), 0.0);
#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                double acc = 0.0;
                for (int dz = -half; dz <= half; ++dz) {
                    const int sz = std::clamp(z + dz, 0, nz - 1);
                    for (int dy = -half; dy <= half; ++dy) {
                        const int sy = std::clamp(y + dy, 0, ny - 1);
                        const double* kr =
                            k.data() + ((static_cast<std::size_t>(dz + half) * len) + (dy + half)) * len;
                        const double* sr = in.data() + flat_index(d, 0, sy, sz);
                        for (int dx = -half; dx <= half; ++dx)
                            acc += kr[dx + half] * sr[std::clamp(x + dx, 0, nx - 1)];
                    }
                }
                out[flat_index(d, x, y, z)] = acc;
            }
    }
    return out;
}

} // namespace

std::vector<double> log_kernel_15() {
    const int len = 2 * kLogHalf + 1;
    std::vector<double> g(static_cast<std::size_t>(len) * len * len);
    const double s2 = kLogSigma * kLogSigma;
    double gsum = 0.0;
    for (int z = -kLogHalf; z <= kLogHalf; ++z)
        for (int y = -kLogHalf; y <= kLogHalf; ++y)
            for (int x = -kLogHalf; x <= kLogHalf; ++x) {
                const double r2 = x * x + y * y + z * z;
                const double v = std::exp(-0.5 * r2 / s2);
                g[((static_cast<std::size_t>(z + kLogHalf) * len) + (y + kLogHalf)) * len + x + kLogHalf] = v;
                gsum += v;
            }
    // 3D Laplacian of the normalized Gaussian, then mean-subtracted to be
    // exactly zero-sum
    std::vector<double> k(g.size());
    double ksum = 0.0;
    std::size_t i = 0;
    for (int z = -kLogHalf; z <= kLogHalf; ++z)
        for (int y = -kLogHalf; y <= kLogHalf; ++y)
            for (int x = -kLogHalf; x <= kLogHalf; ++x, ++i) {
                const double r2 = x * x + y * y + z * z;
                k[i] = (g[i] / gsum) * (r2 - 3.0 * s2) / (s2 * s2);
                ksum += k[i];
            }
    const double shift = ksum / static_cast<double>(k.size());
    for (double& v : k) v -= shift;
    return k;
}

double psnr(const Volume& pred, const Volume& ref, const std::vector<std::uint8_t>& mask) {
    check_shapes(pred, ref, mask);
    const std::size_t n = mask_count(mask, ref.size());
    if (n == 0) throw parameter_error("metric mask is empty");

    const double range = ref_range(ref, mask);
    double mse = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (!in_mask(mask, i)) continue;
        const double d = pred.data[i] - ref.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(n);
    if (mse == 0.0) return kPsnrPerfect;
    return 10.0 * std::log10(range * range / mse);
}

double ssim(const Volume& pred, const Volume& ref, const std::vector<std::uint8_t>& mask) {
    check_shapes(pred, ref, mask);
    const std::size_t n = mask_count(mask, ref.size());
    const std::size_t window_volume = 11u * 11u * 11u;
    if (n < window_volume) throw parameter_error("mask smaller than the SSIM window");

    const double range = ref_range(ref, mask);
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);

    const Dims3 d = ref.dims;
    std::vector<double> xy(ref.size()), xx(ref.size()), yy(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        xy[i] = pred.data[i] * ref.data[i];
        xx[i] = pred.data[i] * pred.data[i];
        yy[i] = ref.data[i] * ref.data[i];
    }
    const std::vector<double> mu_x = gauss_filter(pred.data, d);
    const std::vector<double> mu_y = gauss_filter(ref.data, d);
    const std::vector<double> m_xy = gauss_filter(xy, d);
    const std::vector<double> m_xx = gauss_filter(xx, d);
    const std::vector<double> m_yy = gauss_filter(yy, d);

    double acc = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (!in_mask(mask, i)) continue;
        const double cov = m_xy[i] - mu_x[i] * mu_y[i];
        const double vx = m_xx[i] - mu_x[i] * mu_x[i];
        const double vy = m_yy[i] - mu_y[i] * mu_y[i];
        acc += ((2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * cov + c2)) /
               ((mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (vx + vy + c2));
    }
    return acc / static_cast<double>(n);
}

double hfen(const Volume& pred, const Volume& ref, const std::vector<std::uint8_t>& mask) {
    check_shapes(pred, ref, mask);
    if (mask_count(mask, ref.size()) == 0) throw parameter_error("metric mask is empty");

    const std::vector<double> k = log_kernel_15();
    std::vector<double> diff(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) diff[i] = pred.data[i] - ref.data[i];

    const std::vector<double> log_diff = conv_full(diff, ref.dims, k, kLogHalf);
    const std::vector<double> log_ref = conv_full(ref.data, ref.dims, k, kLogHalf);

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        if (!in_mask(mask, i)) continue;
        num += log_diff[i] * log_diff[i];
        den += log_ref[i] * log_ref[i];
    }
    if (den == 0.0) throw parameter_error("reference has no high-frequency content in the mask");
    return 100.0 * std::sqrt(num) / std::sqrt(den);
}

MetricReport evaluate(const Volume& pred, const Volume& ref, const std::vector<std::uint8_t>& mask) {
    MetricReport r;
    r.psnr = psnr(pred, ref, mask);
    r.ssim = ssim(pred, ref, mask);
    r.hfen = hfen(pred, ref, mask);
    r.voxels = mask_count(mask, ref.size());
    return r;
}

} // namespace qsm::metrics

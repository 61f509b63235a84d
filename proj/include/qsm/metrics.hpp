#pragma once

#include "qsm/volume.hpp"

namespace qsm {
namespace metrics {

// Reported when pred == ref exactly (MSE 0); keeps reports JSON-safe.
inline constexpr double kPsnrPerfect = 999.0;

struct MetricReport {
    double psnr = 0.0; // dB
    double ssim = 0.0;
    double hfen = 0.0; // percent
    std::size_t voxels = 0;
};

/// 10 log10(range^2 / MSE) with range = max-min of ref inside the mask.
/// An empty mask argument means all voxels.
double psnr(const Volume& pred, const Volume& ref, const std::vector<std::uint8_t>& mask = {});

/// Mean local SSIM over mask voxels, 3D Gaussian window sigma 1.5 truncated
/// at 11^3 (border-renormalized), K1 = 0.01, K2 = 0.03, data range taken
/// from ref inside the mask.
double ssim(const Volume& pred, const Volume& ref, const std::vector<std::uint8_t>& mask = {});

/// 100 * ||LoG(pred - ref)||_2 / ||LoG(ref)||_2 over the mask, with a 15^3
/// Laplacian-of-Gaussian kernel (sigma 1.5, exactly zero-sum).
double hfen(const Volume& pred, const Volume& ref, const std::vector<std::uint8_t>& mask = {});

MetricReport evaluate(const Volume& pred, const Volume& ref,
                      const std::vector<std::uint8_t>& mask = {});

// The 15^3 sigma-1.5 LoG kernel used by hfen (exposed for tests).
std::vector<double> log_kernel_15();

} // namespace metrics
} // namespace qsm

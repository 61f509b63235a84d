#pragma once

#include <cstdint>

#include "qsm/volume.hpp"

namespace qsm {

/// Unit dipole kernel sampled on the discrete FFT frequency grid,
/// D(k) = 1/3 - (k.b0)^2 / |k|^2 with D(0) = 0. Values lie in [-2/3, 1/3]
/// and the kernel is even-symmetric on the grid. Frequencies are scaled by
/// 1/voxel_size per axis so anisotropic voxels produce the correct kernel.
struct DipoleKernel {
    Dims3 dims{0, 0, 0};
    std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
    std::array<double, 3> b0_dir{0.0, 0.0, 1.0};
    std::vector<double> values; // same x-fastest layout as Volume
};

DipoleKernel dipole_kernel(const Dims3& dims, const std::array<double, 3>& voxel_size,
                           const std::array<double, 3>& b0_dir);

/// Forward model phi = F^-1 D F chi (Eq. of the field from a susceptibility
/// distribution as a k-space point multiplication). Output is real; the
/// imaginary residue must stay below 1e-5 relative and is discarded.
Volume forward_field(const Volume& chi, const DipoleKernel& D);

struct NoiseSpec {
    double sigma = 0.0; // ppm
    std::uint64_t seed = 0;
};

// phi + i.i.d. zero-mean Gaussian noise, std sigma. sigma == 0 returns the
// input bit-exactly.
Volume add_noise(const Volume& phi, const NoiseSpec& spec);

/// Thresholded k-space division: F^-1 [ F(phi) / D' ] with
/// D'(k) = D(k) where |D(k)| >= threshold, else sign(D(k)) * threshold
/// (sign(0) := +1). Masked to the field's support mask when present.
Volume tkd_invert(const Volume& phi, const DipoleKernel& D, double threshold);

} // namespace qsm

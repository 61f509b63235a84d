#pragma once

#include "qsm/dipole.hpp"
#include "qsm/volume.hpp"

namespace qsm {

struct SphereComponent {
    std::array<double, 3> center{0, 0, 0}; // voxel coordinates
    double radius = 0.0;                   // voxels
    double chi = 0.0;                      // ppm
};

struct EllipsoidComponent {
    std::array<double, 3> center{0, 0, 0};
    std::array<double, 3> semi_axes{0, 0, 0}; // voxels, axis-aligned
    double chi = 0.0;
};

struct CylinderComponent {
    std::array<double, 3> center{0, 0, 0};
    std::array<double, 3> axis{0, 0, 1}; // unit vector
    double radius = 0.0;
    double half_length = 0.0;
    double chi = 0.0;
};

/// Synthetic susceptibility phantom: values superpose additively; the mask is
/// the union of component supports dilated by mask_dilation voxels.
struct PhantomSpec {
    Dims3 dims{0, 0, 0};
    std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
    std::vector<SphereComponent> spheres;
    std::vector<EllipsoidComponent> ellipsoids;
    std::vector<CylinderComponent> cylinders;
    int mask_dilation = 4;
};

Volume make_phantom(const PhantomSpec& spec);

// Deterministic random ellipsoid mixture; the stand-in for real training
// anatomy at desk scale.
PhantomSpec random_ellipsoid_mixture(const Dims3& dims, int count, std::uint64_t seed);

struct AcquisitionResult {
    Volume phi;          // ppm, out_dims grid, mask = downsampled source mask
    DipoleKernel kernel; // matched to the out_dims grid
};

/// Forward field at full resolution with the kernel oriented along b0_dir,
/// trilinear resampling to out_dims, then additive Gaussian noise.
AcquisitionResult simulate_acquisition(const Volume& chi, const std::array<double, 3>& b0_dir,
                                       const Dims3& out_dims, const NoiseSpec& noise);

} // namespace qsm

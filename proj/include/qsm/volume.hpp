#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qsm/kernels.hpp"

namespace qsm {

/// A 3D scalar field (ppm for susceptibility and field maps, dimensionless in
/// normalized model space) with acquisition metadata and an optional support
/// mask. Payload order is x fastest: offset = x + nx*(y + ny*z).
/// Volumes are immutable values after construction; all operations on them
/// are pure functions returning new volumes.
struct Volume {
    Dims3 dims{0, 0, 0};
    std::array<double, 3> voxel_size{1.0, 1.0, 1.0}; // mm
    std::array<double, 3> b0_dir{0.0, 0.0, 1.0};     // unit vector
    std::vector<double> data;
    std::vector<std::uint8_t> mask; // empty = no mask, else one 0/1 per voxel

    std::size_t size() const { return data.size(); }
    bool has_mask() const { return !mask.empty(); }
    std::size_t index(int x, int y, int z) const { return flat_index(dims, x, y, z); }
    double at(int x, int y, int z) const { return data[index(x, y, z)]; }
    double& at(int x, int y, int z) { return data[index(x, y, z)]; }
};

Volume make_volume(const Dims3& dims,
                   const std::array<double, 3>& voxel_size = {1.0, 1.0, 1.0},
                   const std::array<double, 3>& b0_dir = {0.0, 0.0, 1.0},
                   double fill = 0.0);

// Throws if any invariant is violated (unit b0, finite data, mask size).
void validate(const Volume& v);

/// QVOL file format (little-endian): magic "QVL1", u32 version=1,
/// u32 nx,ny,nz, f32 voxel_size[3], f32 b0_dir[3], u8 has_mask,
/// nx*ny*nz f32 payload, then nx*ny*nz u8 mask when present.
void save_volume(const Volume& v, const std::string& path);
Volume load_volume(const std::string& path);

/// Affine map between physical ppm values and the model's [-1,1] range.
/// model value = ppm / chi_scale, clipped to [-1, 1].
struct NormalizationSpec {
    double chi_scale = 0.2; // ppm
};

// clipped, when given, receives the number of voxels that hit the clip.
Volume normalize(const Volume& v, const NormalizationSpec& spec, long* clipped = nullptr);

// Precondition: values within [-1, 1]. Throws parameter_error otherwise.
Volume denormalize(const Volume& v, const NormalizationSpec& spec);

// Plain scaling without the [-1,1] contract; internal helper.
Volume scaled(const Volume& v, double factor);

// Zero-padded centered embedding into target dims (target >= dims) and its
// inverse crop. Metadata (voxel size, b0) is preserved; the mask is padded
// with zeros / cropped along with the data.
Volume pad_center(const Volume& v, const Dims3& target);
Volume crop_center(const Volume& v, const Dims3& target);

} // namespace qsm

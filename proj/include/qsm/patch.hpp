#pragma once

#include "qsm/volume.hpp"

namespace qsm {

/// Overlapping patch decomposition of a volume: per-axis start offsets plus
/// the crop mask m counting how many patches cover each voxel. Every voxel is
/// covered at least once (starts are end-clamped, never padded).
struct PatchLayout {
    Dims3 volume_dims{0, 0, 0};
    Dims3 patch_size{0, 0, 0};
    Dims3 overlap{0, 0, 0};                // d - stride per axis (informational)
    std::vector<Dims3> starts;             // z-major order, x fastest
    std::vector<int> crop_mask;            // per voxel coverage count, >= 1

    int patch_count() const { return static_cast<int>(starts.size()); }
    std::size_t patch_volume() const { return volume_of(patch_size); }
};

/// Starts per axis: 0, (d-o), 2(d-o), ...; starts whose patch would overrun
/// are clamped to dim-d; duplicates removed. Requires d <= dims and o < d.
PatchLayout plan_patches(const Dims3& volume_dims, const Dims3& patch_size, const Dims3& overlap);

/// Same layout type with stride-based planning (training-time cropping).
PatchLayout plan_patches_stride(const Dims3& volume_dims, const Dims3& patch_size, const Dims3& stride);

/// Patch i is the exact sub-block at starts[i]; order matches starts order.
std::vector<std::vector<double>> extract(const Volume& v, const PatchLayout& layout);

/// Scatter-adds patches at their starts without crop-mask normalization.
/// Deterministic: per voxel, contributions accumulate in patch-index order
/// regardless of thread count.
void scatter_add(const std::vector<std::vector<double>>& patches, const PatchLayout& layout,
                 std::vector<double>& out);

/// scatter_add followed by element-wise division by the crop mask;
/// assemble(extract(v)) == v. Metadata of the result is default-initialized.
Volume assemble(const std::vector<std::vector<double>>& patches, const PatchLayout& layout);

} // namespace qsm

#pragma once

#include "qsm/patch.hpp"
#include "qsm/volume.hpp"

namespace qsm {

/// Normalized training patches. Patches with more than 95% zero-valued
/// voxels are excluded (a patch with exactly 95% zeros is kept).
struct PatchDataset {
    Dims3 patch_size{0, 0, 0};
    int stride = 0;
    double exclusion_ratio = 0.95;
    std::vector<std::vector<double>> patches;

    std::size_t size() const { return patches.size(); }
};

PatchDataset build_dataset(const std::vector<Volume>& volumes, int patch_size, int stride,
                           const NormalizationSpec& norm);

} // namespace qsm

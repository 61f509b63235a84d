#include "qsm/dataset.hpp"

#include "qsm/errors.hpp"

namespace qsm {

PatchDataset build_dataset(const std::vector<Volume>& volumes, int patch_size, int stride,
                           const NormalizationSpec& norm) {
    if (patch_size <= 0 || stride <= 0) throw parameter_error("patch size and stride must be positive");

    PatchDataset ds;
    ds.patch_size = {patch_size, patch_size, patch_size};
    ds.stride = stride;

    for (const Volume& v : volumes) {
        const Volume nv = normalize(v, norm);
        const PatchLayout layout =
            plan_patches_stride(v.dims, ds.patch_size, {stride, stride, stride});
        std::vector<std::vector<double>> patches = extract(nv, layout);
        for (auto& p : patches) {
            std::size_t zeros = 0;
            for (double x : p)
                if (x == 0.0) ++zeros;
            const double frac = static_cast<double>(zeros) / static_cast<double>(p.size());
            if (frac > ds.exclusion_ratio) continue; // strictly "over 95%"
            ds.patches.push_back(std::move(p));
        }
    }
    if (ds.patches.empty()) throw data_error("dataset is empty after the zero-voxel exclusion rule");
    return ds;
}

} // namespace qsm

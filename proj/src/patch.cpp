#include "qsm/patch.hpp"

#include <algorithm>

#include "qsm/errors.hpp"

namespace qsm {

namespace {

std::vector<int> axis_starts(int dim, int d, int stride) {
    std::vector<int> s;
    for (int p = 0;; p += stride) {
        if (p + d > dim) {
            s.push_back(dim - d); // end clamp keeps the far boundary covered
            break;
        }
        s.push_back(p);
        if (p + d == dim) break;
    }
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

PatchLayout plan_impl(const Dims3& volume_dims, const Dims3& patch_size, const Dims3& stride,
                      const Dims3& overlap) {
    for (int i = 0; i < 3; ++i) {
        if (patch_size[i] <= 0) throw parameter_error("patch size must be positive");
        if (patch_size[i] > volume_dims[i])
            throw parameter_error("patch size exceeds volume dims; pad first");
        if (stride[i] <= 0) throw parameter_error("patch stride must be positive");
    }

    PatchLayout layout;
    layout.volume_dims = volume_dims;
    layout.patch_size = patch_size;
    layout.overlap = overlap;

    std::array<std::vector<int>, 3> ax;
    for (int i = 0; i < 3; ++i) ax[i] = axis_starts(volume_dims[i], patch_size[i], stride[i]);

    for (int sz : ax[2])
        for (int sy : ax[1])
            for (int sx : ax[0]) layout.starts.push_back({sx, sy, sz});

    layout.crop_mask.assign(volume_of(volume_dims), 0);
    for (const Dims3& s : layout.starts)
        for (int z = s[2]; z < s[2] + patch_size[2]; ++z)
            for (int y = s[1]; y < s[1] + patch_size[1]; ++y) {
                int* row = layout.crop_mask.data() + flat_index(volume_dims, s[0], y, z);
                for (int x = 0; x < patch_size[0]; ++x) ++row[x];
            }
    return layout;
}

} // namespace

PatchLayout plan_patches(const Dims3& volume_dims, const Dims3& patch_size, const Dims3& overlap) {
    Dims3 stride;
    for (int i = 0; i < 3; ++i) {
        if (overlap[i] < 0 || overlap[i] >= patch_size[i])
            throw parameter_error("overlap must satisfy 0 <= o < d");
        stride[i] = patch_size[i] - overlap[i];
    }
    return plan_impl(volume_dims, patch_size, stride, overlap);
}

PatchLayout plan_patches_stride(const Dims3& volume_dims, const Dims3& patch_size, const Dims3& stride) {
    Dims3 overlap;
    for (int i = 0; i < 3; ++i) overlap[i] = std::max(0, patch_size[i] - stride[i]);
    return plan_impl(volume_dims, patch_size, stride, overlap);
}

std::vector<std::vector<double>> extract(const Volume& v, const PatchLayout& layout) {
    if (v.dims != layout.volume_dims) throw parameter_error("volume dims do not match layout");
    const Dims3 d = layout.patch_size;
    std::vector<std::vector<double>> patches(layout.starts.size());

#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(layout.starts.size()); ++i) {
        const Dims3& s = layout.starts[i];
        std::vector<double>& p = patches[i];
        p.resize(layout.patch_volume());
        for (int z = 0; z < d[2]; ++z)
            for (int y = 0; y < d[1]; ++y) {
                const std::size_t src = v.index(s[0], s[1] + y, s[2] + z);
                const std::size_t dst = flat_index(d, 0, y, z);
                std::copy_n(v.data.begin() + src, d[0], p.begin() + dst);
            }
    }
    return patches;
}

void scatter_add(const std::vector<std::vector<double>>& patches, const PatchLayout& layout,
                 std::vector<double>& out) {
    if (patches.size() != layout.starts.size())
        throw parameter_error("patch count does not match layout");
    for (const auto& p : patches)
        if (p.size() != layout.patch_volume()) throw parameter_error("patch shape does not match layout");

    const Dims3 vd = layout.volume_dims;
    const Dims3 d = layout.patch_size;
    out.assign(volume_of(vd), 0.0);

    // Parallel over disjoint z-slabs of the output; within a slab, patches are
    // visited in index order, so per-voxel accumulation order is fixed.
#pragma omp parallel for schedule(static)
    for (int z = 0; z < vd[2]; ++z) {
        for (std::size_t i = 0; i < patches.size(); ++i) {
            const Dims3& s = layout.starts[i];
            const int pz = z - s[2];
            if (pz < 0 || pz >= d[2]) continue;
            const double* p = patches[i].data();
            for (int y = 0; y < d[1]; ++y) {
                const double* src = p + flat_index(d, 0, y, pz);
                double* dst = out.data() + flat_index(vd, s[0], s[1] + y, z);
                for (int x = 0; x < d[0]; ++x) dst[x] += src[x];
            }
        }
    }
}

Volume assemble(const std::vector<std::vector<double>>& patches, const PatchLayout& layout) {
    Volume out = make_volume(layout.volume_dims);
    scatter_add(patches, layout, out.data);
    const long n = static_cast<long>(out.data.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) out.data[i] /= layout.crop_mask[i];
    return out;
}

} // namespace qsm

#pragma once

#include "qsm/volume.hpp"

namespace qsm {

/// Trilinear resampling onto target_dims covering the same physical extent.
/// Cell-centered coordinates with edge clamping; separable (one linear pass
/// per axis). Exact identity when target_dims == dims. Voxel size is rescaled
/// so the physical extent is preserved.
Volume resample_trilinear(const Volume& v, const Dims3& target_dims);

/// Exact adjoint of resample_trilinear: v must be on the low-res grid that
/// resample_trilinear(source_dims -> v.dims) produces, the result lives on
/// source_dims. Satisfies <S x, y> == <x, S^T y>.
Volume resample_adjoint(const Volume& v, const Dims3& source_dims);

} // namespace qsm

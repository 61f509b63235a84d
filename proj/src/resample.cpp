#include "qsm/resample.hpp"

#include <algorithm>
#include <cmath>

#include "qsm/errors.hpp"

namespace qsm {

namespace {

// 1D linear interpolation plan from n_src samples to n_tgt samples,
// cell-centered with edge clamping: u = (j + 0.5) * n_src / n_tgt - 0.5.
struct AxisPlan {
    std::vector<int> i0;     // left source index per target sample
    std::vector<double> w1;  // weight of i0 + 1 (right neighbor)
    int n_src = 0;
};

AxisPlan plan_axis(int n_src, int n_tgt) {
    AxisPlan p;
    p.n_src = n_src;
    p.i0.resize(n_tgt);
    p.w1.resize(n_tgt);
    const double r = static_cast<double>(n_src) / n_tgt;
    for (int j = 0; j < n_tgt; ++j) {
        double u = (j + 0.5) * r - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(n_src - 1));
        int i = static_cast<int>(std::floor(u));
        if (i > n_src - 2) i = n_src - 2; // u == n_src-1 lands on the last cell with f == 1
        if (n_src == 1) {
            p.i0[j] = 0;
            p.w1[j] = 0.0;
        } else {
            p.i0[j] = i;
            p.w1[j] = u - i;
        }
    }
    return p;
}

// Applies the 1D plan along `axis` of a volume: out dim on that axis becomes
// plan.w1.size(). Gather over target samples; parallel across lines.
std::vector<double> apply_axis(const std::vector<double>& in, Dims3 dims, int axis,
                               const AxisPlan& plan, Dims3* out_dims) {
    Dims3 od = dims;
    od[axis] = static_cast<int>(plan.w1.size());
    *out_dims = od;

    std::vector<double> out(volume_of(od));
    // strides for walking along `axis` and over the two other axes
    const std::size_t sx = 1, sy = dims[0], sz = static_cast<std::size_t>(dims[0]) * dims[1];
    const std::size_t in_stride = axis == 0 ? sx : axis == 1 ? sy : sz;
    const std::size_t ox = 1, oy = od[0], oz = static_cast<std::size_t>(od[0]) * od[1];
    const std::size_t out_stride = axis == 0 ? ox : axis == 1 ? oy : oz;

    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    const std::size_t in_s1 = a1 == 0 ? sx : a1 == 1 ? sy : sz;
    const std::size_t in_s2 = a2 == 1 ? sy : sz;
    const std::size_t out_s1 = a1 == 0 ? ox : a1 == 1 ? oy : oz;
    const std::size_t out_s2 = a2 == 1 ? oy : oz;
    const int n1 = dims[a1], n2 = dims[a2];
    const int m = od[axis];

#pragma omp parallel for collapse(2) schedule(static)
    for (int k2 = 0; k2 < n2; ++k2) {
        for (int k1 = 0; k1 < n1; ++k1) {
            const double* src = in.data() + k1 * in_s1 + k2 * in_s2;
            double* dst = out.data() + k1 * out_s1 + k2 * out_s2;
            for (int j = 0; j < m; ++j) {
                const int i = plan.i0[j];
                const double f = plan.w1[j];
                double v = (1.0 - f) * src[i * in_stride];
                if (f != 0.0) v += f * src[(i + 1) * in_stride];
                dst[j * out_stride] = v;
            }
        }
    }
    return out;
}

// Adjoint of apply_axis. Gather form: each source sample collects the
// contributions of the contiguous target range whose stencil touches it.
std::vector<double> apply_axis_adjoint(const std::vector<double>& in, Dims3 dims, int axis,
                                       const AxisPlan& plan, Dims3* out_dims) {
    const int n_src = plan.n_src;
    const int m = static_cast<int>(plan.w1.size());
    Dims3 od = dims;
    od[axis] = n_src;
    *out_dims = od;

    // per-source contribution lists (j, weight), in increasing j
    std::vector<std::vector<std::pair<int, double>>> contrib(n_src);
    for (int j = 0; j < m; ++j) {
        contrib[plan.i0[j]].emplace_back(j, 1.0 - plan.w1[j]);
        if (plan.w1[j] != 0.0) contrib[plan.i0[j] + 1].emplace_back(j, plan.w1[j]);
    }

    std::vector<double> out(volume_of(od));
    const std::size_t sx = 1, sy = dims[0], sz = static_cast<std::size_t>(dims[0]) * dims[1];
    const std::size_t in_stride = axis == 0 ? sx : axis == 1 ? sy : sz;
    const std::size_t ox = 1, oy = od[0], oz = static_cast<std::size_t>(od[0]) * od[1];
    const std::size_t out_stride = axis == 0 ? ox : axis == 1 ? oy : oz;

    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    const std::size_t in_s1 = a1 == 0 ? sx : a1 == 1 ? sy : sz;
    const std::size_t in_s2 = a2 == 1 ? sy : sz;
    const std::size_t out_s1 = a1 == 0 ? ox : a1 == 1 ? oy : oz;
    const std::size_t out_s2 = a2 == 1 ? oy : oz;
    const int n1 = dims[a1], n2 = dims[a2];

#pragma omp parallel for collapse(2) schedule(static)
    for (int k2 = 0; k2 < n2; ++k2) {
        for (int k1 = 0; k1 < n1; ++k1) {
            const double* src = in.data() + k1 * in_s1 + k2 * in_s2;
            double* dst = out.data() + k1 * out_s1 + k2 * out_s2;
            for (int i = 0; i < n_src; ++i) {
                double acc = 0.0;
                for (const auto& [j, w] : contrib[i]) acc += w * src[j * in_stride];
                dst[i * out_stride] = acc;
            }
        }
    }
    return out;
}

} // namespace

Volume resample_trilinear(const Volume& v, const Dims3& target_dims) {
    for (int i = 0; i < 3; ++i)
        if (target_dims[i] <= 0) throw parameter_error("target dims must be positive");
    if (target_dims == v.dims) return v;

    Dims3 d = v.dims;
    std::vector<double> buf = v.data;
    for (int axis = 0; axis < 3; ++axis) {
        if (d[axis] == target_dims[axis]) continue;
        Dims3 nd;
        buf = apply_axis(buf, d, axis, plan_axis(d[axis], target_dims[axis]), &nd);
        d = nd;
    }

    Volume out;
    out.dims = target_dims;
    for (int i = 0; i < 3; ++i)
        out.voxel_size[i] = v.voxel_size[i] * static_cast<double>(v.dims[i]) / target_dims[i];
    out.b0_dir = v.b0_dir;
    out.data = std::move(buf);
    if (v.has_mask()) {
        // masks travel as indicator fields, re-thresholded at 0.5
        Volume m = make_volume(v.dims, v.voxel_size, v.b0_dir);
        for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = v.mask[i] ? 1.0 : 0.0;
        Volume mr = resample_trilinear(m, target_dims);
        out.mask.resize(out.size());
        for (std::size_t i = 0; i < out.size(); ++i) out.mask[i] = mr.data[i] >= 0.5 ? 1 : 0;
    }
    return out;
}

Volume resample_adjoint(const Volume& v, const Dims3& source_dims) {
    for (int i = 0; i < 3; ++i)
        if (source_dims[i] <= 0) throw parameter_error("source dims must be positive");
    if (source_dims == v.dims) return v;

    Dims3 d = v.dims;
    std::vector<double> buf = v.data;
    for (int axis = 0; axis < 3; ++axis) {
        if (d[axis] == source_dims[axis]) continue;
        Dims3 nd;
        buf = apply_axis_adjoint(buf, d, axis, plan_axis(source_dims[axis], d[axis]), &nd);
        d = nd;
    }

    Volume out;
    out.dims = source_dims;
    for (int i = 0; i < 3; ++i)
        out.voxel_size[i] = v.voxel_size[i] * static_cast<double>(v.dims[i]) / source_dims[i];
    out.b0_dir = v.b0_dir;
    out.data = std::move(buf);
    return out;
}

} // namespace qsm

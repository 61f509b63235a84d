#include "qsm/phantom.hpp"

#include <cmath>

#include "qsm/errors.hpp"
#include "qsm/resample.hpp"
#include "qsm/rng.hpp"

namespace qsm {

namespace {

bool inside_volume(const std::array<double, 3>& c, double extent, const Dims3& dims) {
    for (int i = 0; i < 3; ++i)
        if (c[i] - extent < -0.5 || c[i] + extent > dims[i] - 0.5) return false;
    return true;
}

// Chebyshev-ball check would overshoot corners; use Euclidean offsets.
std::vector<std::array<int, 3>> ball_offsets(int r) {
    std::vector<std::array<int, 3>> off;
    for (int z = -r; z <= r; ++z)
        for (int y = -r; y <= r; ++y)
            for (int x = -r; x <= r; ++x)
                if (x * x + y * y + z * z <= r * r) off.push_back({x, y, z});
    return off;
}

} // namespace

Volume make_phantom(const PhantomSpec& spec) {
    for (const auto& s : spec.spheres) {
        if (!(s.radius > 0.0)) throw parameter_error("sphere radius must be positive");
        if (!inside_volume(s.center, s.radius, spec.dims))
            throw parameter_error("sphere extends outside the volume");
        if (!std::isfinite(s.chi)) throw parameter_error("chi must be finite");
    }
    for (const auto& e : spec.ellipsoids) {
        for (int i = 0; i < 3; ++i) {
            if (!(e.semi_axes[i] > 0.0)) throw parameter_error("ellipsoid semi-axes must be positive");
            // axis-aligned: the bounding box is per-axis
            if (e.center[i] - e.semi_axes[i] < -0.5 ||
                e.center[i] + e.semi_axes[i] > spec.dims[i] - 0.5)
                throw parameter_error("ellipsoid extends outside the volume");
        }
        if (!std::isfinite(e.chi)) throw parameter_error("chi must be finite");
    }
    for (const auto& c : spec.cylinders) {
        if (!(c.radius > 0.0) || !(c.half_length > 0.0))
            throw parameter_error("cylinder geometry must be positive");
        const double m = std::sqrt(c.radius * c.radius + c.half_length * c.half_length);
        if (!inside_volume(c.center, m, spec.dims))
            throw parameter_error("cylinder extends outside the volume");
        if (!std::isfinite(c.chi)) throw parameter_error("chi must be finite");
    }

    Volume v = make_volume(spec.dims, spec.voxel_size);
    std::vector<std::uint8_t> support(v.size(), 0);
    const int nx = spec.dims[0], ny = spec.dims[1], nz = spec.dims[2];

#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                double val = 0.0;
                bool in = false;
                for (const auto& s : spec.spheres) {
                    const double dx = x - s.center[0], dy = y - s.center[1], dz = z - s.center[2];
                    if (dx * dx + dy * dy + dz * dz <= s.radius * s.radius) {
                        val += s.chi;
                        in = true;
                    }
                }
                for (const auto& e : spec.ellipsoids) {
                    const double dx = (x - e.center[0]) / e.semi_axes[0];
                    const double dy = (y - e.center[1]) / e.semi_axes[1];
                    const double dz = (z - e.center[2]) / e.semi_axes[2];
                    if (dx * dx + dy * dy + dz * dz <= 1.0) {
                        val += e.chi;
                        in = true;
                    }
                }
                for (const auto& c : spec.cylinders) {
                    const double dx = x - c.center[0], dy = y - c.center[1], dz = z - c.center[2];
                    const double proj = dx * c.axis[0] + dy * c.axis[1] + dz * c.axis[2];
                    if (std::abs(proj) > c.half_length) continue;
                    const double r2 = dx * dx + dy * dy + dz * dz - proj * proj;
                    if (r2 <= c.radius * c.radius) {
                        val += c.chi;
                        in = true;
                    }
                }
                const std::size_t i = flat_index(spec.dims, x, y, z);
                // f32-exact values so QVOL roundtrips reproduce the phantom
                // bit for bit
                v.data[i] = static_cast<float>(val);
                support[i] = in ? 1 : 0;
            }
    }

    // mask = support dilated by mask_dilation voxels (Euclidean ball)
    v.mask.assign(v.size(), 0);
    const auto offsets = ball_offsets(spec.mask_dilation);
#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                std::uint8_t m = 0;
                for (const auto& o : offsets) {
                    const int sx = x + o[0], sy = y + o[1], sz = z + o[2];
                    if (sx < 0 || sx >= nx || sy < 0 || sy >= ny || sz < 0 || sz >= nz) continue;
                    if (support[flat_index(spec.dims, sx, sy, sz)]) {
                        m = 1;
                        break;
                    }
                }
                v.mask[flat_index(spec.dims, x, y, z)] = m;
            }
    }
    return v;
}

PhantomSpec random_ellipsoid_mixture(const Dims3& dims, int count, std::uint64_t seed) {
    if (count < 1) throw parameter_error("component count must be positive");
    PhantomSpec spec;
    spec.dims = dims;
    RandomStream rng(mix_seed(seed, 0x656c6c6970ull));
    const double lo = 0.15, hi = 0.85; // keep components off the boundary
    for (int i = 0; i < count; ++i) {
        EllipsoidComponent e;
        for (int a = 0; a < 3; ++a) {
            e.center[a] = (lo + (hi - lo) * rng.uniform()) * dims[a];
            const double margin = std::min(e.center[a] - 0.5, dims[a] - 1.5 - e.center[a]);
            e.semi_axes[a] =
                std::clamp((0.35 + 0.65 * rng.uniform()) * 0.85 * margin, 1.0, margin);
        }
        // susceptibility contrasts on the scale of tissue values, both signs
        e.chi = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.02 + 0.10 * rng.uniform());
        spec.ellipsoids.push_back(e);
    }
    return spec;
}

AcquisitionResult simulate_acquisition(const Volume& chi, const std::array<double, 3>& b0_dir,
                                       const Dims3& out_dims, const NoiseSpec& noise) {
    for (int i = 0; i < 3; ++i)
        if (out_dims[i] > chi.dims[i]) throw parameter_error("out_dims must not exceed chi dims");

    const DipoleKernel D = dipole_kernel(chi.dims, chi.voxel_size, b0_dir);
    Volume src = chi;
    src.b0_dir = b0_dir;
    Volume phi_full = forward_field(src, D);
    if (chi.has_mask()) phi_full.mask = chi.mask; // carried for downstream masking

    Volume phi = resample_trilinear(phi_full, out_dims);
    phi = add_noise(phi, noise);

    AcquisitionResult out;
    out.kernel = dipole_kernel(out_dims, phi.voxel_size, b0_dir);
    out.phi = std::move(phi);
    return out;
}

} // namespace qsm

#include "doctest.h"
#include "helpers.hpp"
#include "qsm/errors.hpp"
#include "qsm/metrics.hpp"
#include "qsm/phantom.hpp"
#include "qsm/rng.hpp"

using namespace qsm;
using namespace qsm::metrics;

namespace {

Volume smooth_phantom(const Dims3& dims, std::uint64_t seed) {
    PhantomSpec spec = random_ellipsoid_mixture(dims, 6, seed);
    return make_phantom(spec);
}

// independent separable gaussian blur for the monotonicity sweeps
Volume blurred(const Volume& v, double sigma) {
    const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * half + 1);
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        k[i + half] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + half];
    }
    for (double& x : k) x /= sum;

    Volume out = v;
    for (int axis = 0; axis < 3; ++axis) {
        Volume tmp = out;
        for (int z = 0; z < v.dims[2]; ++z)
            for (int y = 0; y < v.dims[1]; ++y)
                for (int x = 0; x < v.dims[0]; ++x) {
                    double acc = 0.0, w = 0.0;
                    for (int j = -half; j <= half; ++j) {
                        int px = x, py = y, pz = z;
                        (axis == 0 ? px : axis == 1 ? py : pz) += j;
                        if (px < 0 || px >= v.dims[0] || py < 0 || py >= v.dims[1] || pz < 0 ||
                            pz >= v.dims[2])
                            continue;
                        acc += k[j + half] * tmp.at(px, py, pz);
                        w += k[j + half];
                    }
                    out.at(x, y, z) = acc / w;
                }
    }
    return out;
}

} // namespace

TEST_CASE("psnr: perfect sentinel, closed form, scale invariance") {
    Volume ref = smooth_phantom({24, 24, 24}, 1);
    CHECK(psnr(ref, ref) == kPsnrPerfect);

    // ref range exactly 1, uniform error 0.1 -> 20 dB
    Volume r2 = make_volume({8, 8, 8});
    r2.data[0] = 1.0; // range [0, 1]
    Volume p2 = r2;
    for (double& v : p2.data) v += 0.1;
    CHECK(psnr(p2, r2) == doctest::Approx(20.0).epsilon(1e-9));

    Volume pred = ref;
    RandomStream rng(2);
    for (double& v : pred.data) v += 0.01 * rng.normal();
    const double base = psnr(pred, ref);
    CHECK(psnr(scaled(pred, 2.0), scaled(ref, 2.0)) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("psnr decreases as noise grows") {
    Volume ref = smooth_phantom({24, 24, 24}, 3);
    double prev = 1e9;
    for (double sigma : {0.005, 0.02, 0.08}) {
        Volume pred = ref;
        RandomStream rng(4);
        for (double& v : pred.data) v += sigma * rng.normal();
        const double p = psnr(pred, ref);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim: identity, anticorrelation, offset monotonicity") {
    Volume ref = smooth_phantom({24, 24, 24}, 5);
    CHECK(ssim(ref, ref) == doctest::Approx(1.0).epsilon(1e-12));

    // anticorrelated pattern with (locally) zero mean
    Volume zm = make_volume({16, 16, 16});
    for (int z = 0; z < 16; ++z)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                zm.at(x, y, z) = std::sin(2.0 * M_PI * 5.0 * x / 16.0) *
                                 std::sin(2.0 * M_PI * 5.0 * y / 16.0) *
                                 std::sin(2.0 * M_PI * 5.0 * z / 16.0);
    Volume neg = scaled(zm, -1.0);
    CHECK(ssim(neg, zm) < 0.0);

    double prev = 1.0;
    for (double c : {0.01, 0.05, 0.1}) {
        Volume off = ref;
        for (double& v : off.data) v += c;
        const double s = ssim(off, ref);
        CHECK(s < prev);
        prev = s;
    }
}

TEST_CASE("ssim needs a mask at least as large as the window") {
    Volume a = make_volume({8, 8, 8});
    CHECK_THROWS_AS(ssim(a, a), parameter_error); // 512 < 11^3
}

TEST_CASE("hfen: identity zero, DC rejection, smoothing monotonicity") {
    Volume ref = smooth_phantom({32, 32, 32}, 7);
    CHECK(hfen(ref, ref) == 0.0);

    Volume off = ref;
    for (double& v : off.data) v += 0.3;
    CHECK(hfen(off, ref) <= 1e-6);

    double prev = 0.0;
    for (double sigma : {0.5, 1.0, 2.0}) {
        const double h = hfen(blurred(ref, sigma), ref);
        CHECK(h > prev);
        prev = h;
    }
}

TEST_CASE("log kernel sums to zero") {
    const std::vector<double> k = log_kernel_15();
    REQUIRE(k.size() == 15u * 15 * 15);
    double sum = 0.0;
    for (double v : k) sum += v;
    CHECK(std::abs(sum) <= 1e-6);
}

TEST_CASE("metrics are invariant under a simultaneous voxel relabeling") {
    Volume ref = smooth_phantom({20, 20, 20}, 8);
    Volume pred = ref;
    RandomStream rng(9);
    for (double& v : pred.data) v += 0.01 * rng.normal();
    std::vector<std::uint8_t> mask(ref.size(), 1);

    // flip all axes: a rigid relabeling of the voxel grid
    auto flip = [](const Volume& v) {
        Volume out = v;
        for (int z = 0; z < v.dims[2]; ++z)
            for (int y = 0; y < v.dims[1]; ++y)
                for (int x = 0; x < v.dims[0]; ++x)
                    out.at(x, y, z) =
                        v.data[v.index(v.dims[0] - 1 - x, v.dims[1] - 1 - y, v.dims[2] - 1 - z)];
        return out;
    };
    const double tol = 1e-9;
    CHECK(std::abs(psnr(flip(pred), flip(ref), mask) - psnr(pred, ref, mask)) <= tol);
    CHECK(std::abs(ssim(flip(pred), flip(ref), mask) - ssim(pred, ref, mask)) <= tol);
    CHECK(std::abs(hfen(flip(pred), flip(ref), mask) - hfen(pred, ref, mask)) <= tol);
}

TEST_CASE("report carries the mask voxel count") {
    Volume ref = smooth_phantom({24, 24, 24}, 10);
    Volume pred = ref;
    pred.data[0] += 0.05;
    std::vector<std::uint8_t> mask(ref.size(), 0);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i % 3 ? 1 : 0;
    MetricReport r = evaluate(pred, ref, mask);
    std::size_t want = 0;
    for (auto m : mask) want += m;
    CHECK(r.voxels == want);
    CHECK(r.ssim <= 1.0);
}

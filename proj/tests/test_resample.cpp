#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"
#include "qsm/resample.hpp"

using namespace qsm;

namespace {

// Independent 1D oracle for the resampler's coordinate convention.
double analytic_linear(const std::vector<double>& samples, double u) {
    u = std::clamp(u, 0.0, static_cast<double>(samples.size() - 1));
    const int i = std::min(static_cast<int>(u), static_cast<int>(samples.size()) - 2);
    const double f = u - i;
    return (1.0 - f) * samples[i] + f * samples[i + 1];
}

} // namespace

TEST_CASE("resample identity dims is bit-equal") {
    Volume v = testutil::random_volume({6, 5, 4}, 2);
    Volume r = resample_trilinear(v, v.dims);
    CHECK(r.data == v.data);
}

TEST_CASE("resample of a constant stays constant") {
    Volume v = make_volume({8, 8, 8}, {1, 1, 1}, {0, 0, 1}, 3.25);
    Volume r = resample_trilinear(v, {5, 3, 7});
    for (double x : r.data) CHECK(x == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("resampled ramp matches the analytic trilinear oracle") {
    Volume v = make_volume({64, 64, 64});
    for (int z = 0; z < 64; ++z)
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) v.at(x, y, z) = x;
    std::vector<double> line(64);
    for (int x = 0; x < 64; ++x) line[x] = x;

    Volume r = resample_trilinear(v, {32, 32, 32});
    CHECK(r.voxel_size[0] == doctest::Approx(2.0));
    for (int j = 0; j < 32; ++j) {
        const double u = (j + 0.5) * 2.0 - 0.5;
        const double want = analytic_linear(line, u);
        CHECK(std::abs(r.at(j, 7, 19) - want) <= 1e-5);
    }
}

TEST_CASE("resample is linear") {
    const Dims3 src{7, 6, 5}, tgt{4, 9, 3};
    Volume a = testutil::random_volume(src, 5);
    Volume b = testutil::random_volume(src, 6);
    Volume combo = a;
    for (std::size_t i = 0; i < combo.size(); ++i) combo.data[i] = 2.0 * a.data[i] - 0.5 * b.data[i];

    Volume ra = resample_trilinear(a, tgt);
    Volume rb = resample_trilinear(b, tgt);
    Volume rc = resample_trilinear(combo, tgt);
    for (std::size_t i = 0; i < rc.size(); ++i) {
        const double want = 2.0 * ra.data[i] - 0.5 * rb.data[i];
        CHECK(std::abs(rc.data[i] - want) <= 1e-6 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("adjoint identity when dims match") {
    Volume v = testutil::random_volume({4, 4, 4}, 8);
    Volume a = resample_adjoint(v, v.dims);
    CHECK(a.data == v.data);
}

TEST_CASE("randomized adjoint dot-product test 8^3 -> 4^3") {
    const Dims3 src{8, 8, 8}, tgt{4, 4, 4};
    for (int trial = 0; trial < 10; ++trial) {
        Volume x = testutil::random_volume(src, 100 + trial);
        Volume y = testutil::random_volume(tgt, 200 + trial);
        Volume sx = resample_trilinear(x, tgt);
        Volume sty = resample_adjoint(y, src);
        const double lhs = testutil::dot(sx.data, y.data);
        const double rhs = testutil::dot(x.data, sty.data);
        CHECK(std::abs(lhs - rhs) <= 1e-4 * std::abs(lhs));
    }
}

TEST_CASE("adjoint of a one-hot target equals the explicit stencil column") {
    const Dims3 src{8, 6, 5}, tgt{4, 3, 5};
    // build S column-by-column by forwarding source basis vectors
    const std::size_t ns = volume_of(src), nt = volume_of(tgt);
    std::vector<std::vector<double>> S_cols(ns);
    for (std::size_t i = 0; i < ns; ++i) {
        Volume e = make_volume(src);
        e.data[i] = 1.0;
        S_cols[i] = resample_trilinear(e, tgt).data;
    }
    for (std::size_t j : {std::size_t{0}, nt / 2, nt - 1}) {
        Volume onehot = make_volume(tgt);
        onehot.data[j] = 1.0;
        Volume adj = resample_adjoint(onehot, src);
        double row_sum = 0.0;
        for (std::size_t i = 0; i < ns; ++i) {
            CHECK(std::abs(adj.data[i] - S_cols[i][j]) <= 1e-12);
            row_sum += S_cols[i][j];
        }
        double adj_sum = 0.0;
        for (double v : adj.data) adj_sum += v;
        CHECK(adj_sum == doctest::Approx(row_sum).epsilon(1e-10));
    }
}

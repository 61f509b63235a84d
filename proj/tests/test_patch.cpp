#include "doctest.h"
#include "helpers.hpp"
#include "qsm/errors.hpp"
#include "qsm/patch.hpp"

using namespace qsm;

TEST_CASE("plan: dim 64, d 48, o 8 gives starts {0,16} and the enumerated mask") {
    PatchLayout L = plan_patches({64, 64, 64}, {48, 48, 48}, {8, 8, 8});
    REQUIRE(L.starts.size() == 8); // {0,16}^3
    CHECK(L.starts.front() == Dims3{0, 0, 0});
    CHECK(L.starts.back() == Dims3{16, 16, 16});

    // per-axis coverage: 1 on [0,16), 2 on [16,48), 1 on [48,64)
    auto axis_cover = [](int x) { return (x >= 16 && x < 48) ? 2 : 1; };
    for (int z : {0, 7, 16, 30, 47, 48, 63})
        for (int y : {0, 20, 55})
            for (int x : {3, 16, 47, 50}) {
                const int want = axis_cover(x) * axis_cover(y) * axis_cover(z);
                CHECK(L.crop_mask[flat_index({64, 64, 64}, x, y, z)] == want);
            }
}

TEST_CASE("plan: exact fit gives a single patch with unit mask") {
    PatchLayout L = plan_patches({48, 48, 48}, {48, 48, 48}, {8, 8, 8});
    REQUIRE(L.starts.size() == 1);
    CHECK(L.starts[0] == Dims3{0, 0, 0});
    for (int m : L.crop_mask) CHECK(m == 1);
}

TEST_CASE("plan: dim 64, d 48, o 0 clamps the last start to 16") {
    PatchLayout L = plan_patches({64, 64, 64}, {48, 48, 48}, {0, 0, 0});
    REQUIRE(L.starts.size() == 8);
    CHECK(L.starts.back() == Dims3{16, 16, 16});
    CHECK(L.crop_mask[flat_index({64, 64, 64}, 20, 20, 20)] == 8); // [16,48)^3
    CHECK(L.crop_mask[flat_index({64, 64, 64}, 5, 20, 20)] == 4);
}

TEST_CASE("plan rejects oversized patches and bad overlap") {
    CHECK_THROWS_AS(plan_patches({16, 16, 16}, {17, 16, 16}, {0, 0, 0}), parameter_error);
    CHECK_THROWS_AS(plan_patches({16, 16, 16}, {8, 8, 8}, {8, 0, 0}), parameter_error);
}

TEST_CASE("extract: single patch equals the volume, indexing is exact") {
    Volume v = testutil::random_volume({20, 20, 20}, 31);
    PatchLayout whole = plan_patches(v.dims, v.dims, {0, 0, 0});
    auto patches = extract(v, whole);
    REQUIRE(patches.size() == 1);
    CHECK(patches[0] == v.data);

    PatchLayout L = plan_patches(v.dims, {8, 8, 8}, {4, 4, 4});
    auto ps = extract(v, L);
    // find the patch at start (16,0,0) wait-free by scanning starts
    for (std::size_t i = 0; i < L.starts.size(); ++i) {
        if (L.starts[i] == Dims3{12, 0, 0}) {
            CHECK(ps[i][0] == v.at(12, 0, 0));
            CHECK(ps[i][1] == v.at(13, 0, 0));
        }
    }

    // counting identity: total patch voxels == sum of crop mask
    std::size_t total = 0;
    for (const auto& p : ps) total += p.size();
    std::size_t mask_sum = 0;
    for (int m : L.crop_mask) mask_sum += m;
    CHECK(total == mask_sum);
}

TEST_CASE("assemble inverts extract and averages overlaps") {
    Volume v = testutil::random_volume({30, 22, 17}, 32);
    PatchLayout L = plan_patches(v.dims, {12, 10, 9}, {5, 3, 2});
    Volume r = assemble(extract(v, L), L);
    for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(std::abs(r.data[i] - v.data[i]) <= 1e-6 * std::max(1.0, std::abs(v.data[i])));

    // constant patches reassemble to the constant
    auto patches = extract(v, L);
    for (auto& p : patches) std::fill(p.begin(), p.end(), 2.5);
    Volume c = assemble(patches, L);
    for (double x : c.data) CHECK(x == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("two overlapping patches average to (a+b)/2 on the overlap") {
    // dim 12, d 8, o 4 -> starts {0, 4}; overlap [4, 8)
    PatchLayout L = plan_patches({12, 1, 1}, {8, 1, 1}, {4, 0, 0});
    REQUIRE(L.starts.size() == 2);
    std::vector<std::vector<double>> patches{std::vector<double>(8, 1.0),
                                             std::vector<double>(8, 3.0)};
    Volume out = assemble(patches, L);
    CHECK(out.data[2] == 1.0);
    CHECK(out.data[5] == 2.0); // (1+3)/2
    CHECK(out.data[10] == 3.0);
}

TEST_CASE("assemble is linear in the patch list") {
    Volume v = testutil::random_volume({14, 14, 14}, 33);
    PatchLayout L = plan_patches(v.dims, {8, 8, 8}, {3, 3, 3});
    auto pa = extract(v, L);
    auto pb = extract(testutil::random_volume(v.dims, 34), L);
    auto pc = pa;
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i].size(); ++j) pc[i][j] = 2.0 * pa[i][j] + 0.5 * pb[i][j];
    Volume ra = assemble(pa, L), rb = assemble(pb, L), rc = assemble(pc, L);
    for (std::size_t i = 0; i < rc.size(); ++i)
        CHECK(rc.data[i] == doctest::Approx(2.0 * ra.data[i] + 0.5 * rb.data[i]).epsilon(1e-10));
}

TEST_CASE("roundtrip property over random configurations") {
    RandomStream rng(35);
    for (int trial = 0; trial < 20; ++trial) {
        Dims3 dims, d, o;
        for (int i = 0; i < 3; ++i) {
            dims[i] = static_cast<int>(rng.between(6, 40));
            d[i] = static_cast<int>(rng.between(2, dims[i]));
            o[i] = static_cast<int>(rng.between(0, d[i] - 1));
        }
        PatchLayout L = plan_patches(dims, d, o);
        for (int m : L.crop_mask) CHECK(m >= 1);

        // coverage stays <= 8 when no axis has three windows sharing a voxel
        bool benign = true;
        std::array<std::vector<int>, 3> per_axis;
        for (const auto& s : L.starts) {
            per_axis[0].push_back(s[0]);
            per_axis[1].push_back(s[1]);
            per_axis[2].push_back(s[2]);
        }
        for (int i = 0; i < 3; ++i) {
            auto& a = per_axis[i];
            std::sort(a.begin(), a.end());
            a.erase(std::unique(a.begin(), a.end()), a.end());
            for (std::size_t k = 0; k + 2 < a.size(); ++k)
                if (a[k + 2] - a[k] < d[i]) benign = false;
        }
        if (benign && o[0] < d[0] / 2 && o[1] < d[1] / 2 && o[2] < d[2] / 2)
            for (int m : L.crop_mask) CHECK(m <= 8);

        Volume v = testutil::random_volume(dims, 400 + trial);
        Volume r = assemble(extract(v, L), L);
        for (std::size_t i = 0; i < v.size(); ++i)
            CHECK(std::abs(r.data[i] - v.data[i]) <= 1e-6 * std::max(1.0, std::abs(v.data[i])));
    }
}

TEST_CASE("stride planning matches overlap planning on the shared layout type") {
    PatchLayout a = plan_patches({64, 64, 64}, {48, 48, 48}, {16, 16, 16});
    PatchLayout b = plan_patches_stride({64, 64, 64}, {48, 48, 48}, {32, 32, 32});
    CHECK(a.starts == b.starts);
    CHECK(a.crop_mask == b.crop_mask);
}

#include "doctest.h"
#include "helpers.hpp"
#include "qsm/errors.hpp"
#include "qsm/net.hpp"
#include "qsm/rng.hpp"

using namespace qsm;

namespace {

struct LossProbe {
    DenoiserArch arch;
    NoiseSchedule sched = make_schedule(50, 1e-3, 0.04);
    Dims3 dims{6, 6, 6};
    std::vector<double> x0, eps;
    int t = 20;

    explicit LossProbe(DenoiserArch a, std::uint64_t seed = 7) : arch(a) {
        RandomStream rng(seed);
        x0.resize(volume_of(dims));
        eps.resize(volume_of(dims));
        for (double& v : x0) v = rng.normal();
        for (double& v : eps) v = rng.normal();
    }

    double loss(std::span<const float> theta, std::vector<double>* grad) const {
        std::vector<double> g;
        TrainSample smp{x0, eps, t};
        const double l = loss_and_grads(arch, theta, sched, std::span<const TrainSample>(&smp, 1),
                                        dims, g);
        if (grad) *grad = std::move(g);
        return l;
    }
};

// central finite difference along a random direction restricted to
// [lo, lo+len) of theta
double fd_check(const LossProbe& probe, std::vector<float> theta, std::size_t lo, std::size_t len,
                std::uint64_t seed) {
    std::vector<double> grad;
    probe.loss(theta, &grad);

    RandomStream rng(seed);
    std::vector<double> dir(theta.size(), 0.0);
    double norm = 0.0;
    for (std::size_t i = lo; i < lo + len; ++i) {
        dir[i] = rng.normal();
        norm += dir[i] * dir[i];
    }
    norm = std::sqrt(norm);
    for (double& d : dir) d /= norm;

    const double h = 1e-3;
    std::vector<float> tp = theta, tm = theta;
    for (std::size_t i = lo; i < lo + len; ++i) {
        tp[i] = static_cast<float>(theta[i] + h * dir[i]);
        tm[i] = static_cast<float>(theta[i] - h * dir[i]);
    }
    // evaluate the finite difference at the exact f32 points used
    double fd_dot = 0.0;
    for (std::size_t i = lo; i < lo + len; ++i)
        fd_dot += grad[i] * (static_cast<double>(tp[i]) - static_cast<double>(tm[i])) / (2.0 * h);
    const double fd = (probe.loss(tp, nullptr) - probe.loss(tm, nullptr)) / (2.0 * h);
    return testutil::rel_err(fd, fd_dot);
}

std::vector<float> warm_theta(const DenoiserArch& arch, std::uint64_t seed) {
    // head is zero at init; nudge it so head gradients are exercised from a
    // generic point
    std::vector<float> theta = init_params(arch, seed);
    RandomStream rng(seed + 1);
    const ParamLayout L = make_param_layout(arch);
    for (std::size_t i = L.head_w; i < L.head_b + 1; ++i)
        theta[i] = static_cast<float>(0.05 * rng.normal());
    return theta;
}

} // namespace

TEST_CASE("parameter layout and count") {
    DenoiserArch a{16, 2, 32};
    const std::size_t F = 16, E = 32;
    const std::size_t want = (F * 27 + F) + 2 * (2 * (F * F * 27 + F)) + (F * 27 + 1) +
                             (E * E + E) + (F * E + F);
    CHECK(param_count(a) == want);
    CHECK_THROWS_AS(param_count(DenoiserArch{8, 1, 7}), parameter_error); // odd embed
}

TEST_CASE("zero-initialized head makes the network output zero") {
    DenoiserArch a{8, 2, 8};
    std::vector<float> theta = init_params(a, 3);
    const NetWeights W = promote_weights(a, theta);
    const Dims3 dims{7, 6, 5};
    Volume x = testutil::random_volume(dims, 40);
    std::vector<double> out(x.size(), 1.0);
    net_forward(W, x.data, dims, 13, nullptr, out);
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic and shape-preserving") {
    DenoiserArch a{6, 1, 8};
    std::vector<float> theta = warm_theta(a, 4);
    const NetWeights W = promote_weights(a, theta);
    for (const Dims3& dims : {Dims3{8, 8, 8}, Dims3{16, 16, 16}, Dims3{5, 9, 3}}) {
        Volume x = testutil::random_volume(dims, 41);
        std::vector<double> o1(x.size()), o2(x.size());
        net_forward(W, x.data, dims, 7, nullptr, o1);
        net_forward(W, x.data, dims, 7, nullptr, o2);
        CHECK(o1 == o2);
        CHECK(o1.size() == volume_of(dims));
    }
}

TEST_CASE("gradients match finite differences on every layer type") {
    DenoiserArch a{4, 1, 8};
    LossProbe probe(a);
    std::vector<float> theta = warm_theta(a, 5);
    const ParamLayout L = make_param_layout(a);
    const std::size_t F = 4, E = 8;

    struct Slice {
        const char* name;
        std::size_t lo, len;
    };
    const std::vector<Slice> slices = {
        {"stem conv weights", L.stem_w, F * 27},
        {"stem conv bias", L.stem_b, F},
        {"block conv1 weights", L.block[0].c1w, F * F * 27},
        {"block conv1 bias", L.block[0].c1b, F},
        {"block conv2 weights", L.block[0].c2w, F * F * 27},
        {"block conv2 bias", L.block[0].c2b, F},
        {"head conv weights", L.head_w, F * 27},
        {"head conv bias", L.head_b, 1},
        {"time dense 1 weights", L.t1w, E * E},
        {"time dense 1 bias", L.t1b, E},
        {"time dense 2 weights", L.t2w, F * E},
        {"time dense 2 bias", L.t2b, F},
    };
    for (const Slice& s : slices) {
        for (int rep = 0; rep < 3; ++rep) {
            const double err = fd_check(probe, theta, s.lo, s.len, 1000 + rep);
            INFO(s.name);
            CHECK(err <= 1e-3);
        }
    }
}

TEST_CASE("input VJP matches finite differences") {
    DenoiserArch a{4, 2, 8};
    std::vector<float> theta = warm_theta(a, 6);
    const NetWeights W = promote_weights(a, theta);
    const Dims3 dims{6, 6, 6};
    const int t = 11;

    Volume x = testutil::random_volume(dims, 42);
    Volume u = testutil::random_volume(dims, 43);
    Volume v = testutil::random_volume(dims, 44);

    NetTape tape;
    std::vector<double> eps(x.size());
    net_forward(W, x.data, dims, t, &tape, eps);
    std::vector<double> gx;
    net_backward(W, tape, u.data, nullptr, &gx);

    const double h = 1e-4;
    std::vector<double> xp = x.data, xm = x.data, op(x.size()), om(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] += h * v.data[i];
        xm[i] -= h * v.data[i];
    }
    net_forward(W, xp, dims, t, nullptr, op);
    net_forward(W, xm, dims, t, nullptr, om);
    const double fd = (testutil::dot(op, u.data) - testutil::dot(om, u.data)) / (2.0 * h);
    CHECK(testutil::rel_err(testutil::dot(gx, v.data), fd) <= 1e-3);
}

TEST_CASE("interior translation covariance") {
    DenoiserArch a{4, 1, 8};
    std::vector<float> theta = warm_theta(a, 8);
    const NetWeights W = promote_weights(a, theta);
    const Dims3 dims{14, 14, 14};
    const int t = 9;
    const int radius = 2 * a.blocks + 2; // receptive radius of the conv stack

    Volume x = testutil::random_volume(dims, 45);
    Volume xs = make_volume(dims);
    for (int z = 0; z < 13; ++z)
        for (int y = 0; y < 14; ++y)
            for (int xx = 0; xx < 14; ++xx) xs.at(xx, y, z + 1) = x.at(xx, y, z); // shift +z

    std::vector<double> o(x.size()), os(x.size());
    net_forward(W, x.data, dims, t, nullptr, o);
    net_forward(W, xs.data, dims, t, nullptr, os);

    for (int z = radius; z < 14 - radius - 1; ++z)
        for (int y = radius; y < 14 - radius; ++y)
            for (int xx = radius; xx < 14 - radius; ++xx)
                CHECK(os[flat_index(dims, xx, y, z + 1)] ==
                      doctest::Approx(o[flat_index(dims, xx, y, z)]).epsilon(1e-10));
}

TEST_CASE("loss is batch-permutation and duplication invariant") {
    DenoiserArch a{4, 1, 8};
    LossProbe p1(a, 50), p2(a, 51);
    std::vector<float> theta = warm_theta(a, 9);

    TrainSample s1{p1.x0, p1.eps, p1.t};
    TrainSample s2{p2.x0, p2.eps, 31};
    std::vector<double> g_ab, g_ba, g_dup, g_one;

    std::vector<TrainSample> ab{s1, s2}, ba{s2, s1}, dup{s1, s1}, one{s1};
    const double l_ab = loss_and_grads(a, theta, p1.sched, ab, p1.dims, g_ab);
    const double l_ba = loss_and_grads(a, theta, p1.sched, ba, p1.dims, g_ba);
    CHECK(l_ab == doctest::Approx(l_ba).epsilon(1e-14));
    for (std::size_t i = 0; i < g_ab.size(); ++i)
        CHECK(g_ab[i] == doctest::Approx(g_ba[i]).epsilon(1e-12));

    const double l_dup = loss_and_grads(a, theta, p1.sched, dup, p1.dims, g_dup);
    const double l_one = loss_and_grads(a, theta, p1.sched, one, p1.dims, g_one);
    CHECK(l_dup == doctest::Approx(l_one).epsilon(1e-14));
    for (std::size_t i = 0; i < g_dup.size(); ++i)
        CHECK(g_dup[i] == doctest::Approx(g_one[i]).epsilon(1e-12));
}

TEST_CASE("a rigged perfect predictor has zero loss and zero gradient") {
    // zero-initialized head predicts zero noise; pair it with eps = 0
    DenoiserArch a{4, 1, 8};
    std::vector<float> theta = init_params(a, 10);
    NoiseSchedule sched = make_schedule(50, 1e-3, 0.04);
    const Dims3 dims{5, 5, 5};
    std::vector<double> x0(volume_of(dims), 0.3), eps(volume_of(dims), 0.0);
    TrainSample smp{x0, eps, 12};
    std::vector<double> grad;
    const double l =
        loss_and_grads(a, theta, sched, std::span<const TrainSample>(&smp, 1), dims, grad);
    CHECK(l == 0.0);
    for (double g : grad) CHECK(g == 0.0);
}

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "qsm/rng.hpp"
#include "qsm/volume.hpp"

namespace testutil {

inline qsm::Volume random_volume(const qsm::Dims3& dims, std::uint64_t seed, double scale = 1.0) {
    qsm::Volume v = qsm::make_volume(dims);
    qsm::RandomStream rng(seed);
    for (double& x : v.data) x = scale * rng.normal();
    return v;
}

inline double rel_err(double got, double want) {
    const double denom = std::max(std::abs(want), 1e-12);
    return std::abs(got - want) / denom;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

// Unique path under the build's temp area; removed lazily by the OS.
inline std::string temp_path(const std::string& name) {
    static int counter = 0;
    const auto dir = std::filesystem::temp_directory_path() / "qsm_tests";
    std::filesystem::create_directories(dir);
    return (dir / (std::to_string(reinterpret_cast<std::uintptr_t>(&counter) % 100000) + "_" +
                   std::to_string(counter++) + "_" + name))
        .string();
}

} // namespace testutil

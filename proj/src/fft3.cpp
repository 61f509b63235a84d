#include "qsm/fft3.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>

#include "qsm/errors.hpp"

namespace qsm::fft {

namespace {

// Plans are cached per dims and reused for the process lifetime; each cache
// entry owns its fftw_malloc'd buffer, and data is copied through it. FFTW
// planning/execution on shared buffers is serialized by one mutex — the FFTs
// here always sit inside sequential outer loops.
struct PlanEntry {
    fftw_complex* buf = nullptr;
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
    std::size_t n = 0;
};

std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

PlanEntry& plan_for(const Dims3& dims) {
    static std::map<Dims3, PlanEntry> cache;
    auto it = cache.find(dims);
    if (it != cache.end()) return it->second;

    PlanEntry e;
    e.n = volume_of(dims);
    e.buf = fftw_alloc_complex(e.n);
    if (!e.buf) throw numeric_error("fftw buffer allocation failed");
    // x fastest in memory -> x is FFTW's last (contiguous) dimension
    e.fwd = fftw_plan_dft_3d(dims[2], dims[1], dims[0], e.buf, e.buf, FFTW_FORWARD, FFTW_ESTIMATE);
    e.bwd = fftw_plan_dft_3d(dims[2], dims[1], dims[0], e.buf, e.buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    if (!e.fwd || !e.bwd) throw numeric_error("fftw plan creation failed");
    return cache.emplace(dims, e).first->second;
}

void run(std::vector<std::complex<double>>& buf, const Dims3& dims, bool forward) {
    if (buf.size() != volume_of(dims)) throw parameter_error("fft buffer does not match dims");
    std::lock_guard<std::mutex> lock(fftw_mutex());
    PlanEntry& e = plan_for(dims);
    std::memcpy(static_cast<void*>(e.buf), static_cast<const void*>(buf.data()), e.n * sizeof(fftw_complex));
    fftw_execute(forward ? e.fwd : e.bwd);
    std::memcpy(static_cast<void*>(buf.data()), static_cast<const void*>(e.buf), e.n * sizeof(fftw_complex));
}

} // namespace

void forward(std::vector<std::complex<double>>& buf, const Dims3& dims) {
    run(buf, dims, true);
}

void inverse(std::vector<std::complex<double>>& buf, const Dims3& dims) {
    run(buf, dims, false);
    const double s = 1.0 / static_cast<double>(volume_of(dims));
    for (auto& c : buf) c *= s;
}

} // namespace qsm::fft

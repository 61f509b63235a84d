#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qsm::par {

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Caps the team size for all subsequent parallel regions. Results of every
// kernel in this library are independent of the cap (gather-form parallelism
// with fixed-order inner sums).
inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

} // namespace qsm::par

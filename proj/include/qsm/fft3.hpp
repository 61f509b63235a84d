#pragma once

#include <complex>
#include <vector>

#include "qsm/kernels.hpp"

namespace qsm::fft {

// In-place complex 3D DFTs on x-fastest buffers. Backed by FFTW (serial
// plans, FFTW_ESTIMATE) so results are identical for any thread count.
// inverse() includes the 1/N scaling.
void forward(std::vector<std::complex<double>>& buf, const Dims3& dims);
void inverse(std::vector<std::complex<double>>& buf, const Dims3& dims);

} // namespace qsm::fft

#pragma once

#include <complex>
#include <vector>

namespace denza::fft {

using cplx = std::complex<double>;

/// In-place unnormalized DFT of length n. `inverse` uses exp(+2 pi i k n / N).
void transform_1d(std::vector<cplx>& data, bool inverse);

/// In-place unnormalized 2D DFT of a row-major (rows x cols) array.
void transform_2d(std::vector<cplx>& data, int rows, int cols, bool inverse);

} // namespace denza::fft

#include "denza/fft.hpp"

#include <mutex>

#include <fftw3.h>

namespace denza::fft {

namespace {

// fftw planning is not thread safe; execution is.
std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

void run(std::vector<cplx>& data, int rank, const int* dims, bool inverse)
{
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft(rank, dims, ptr, ptr, inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
}

} // namespace

void transform_1d(std::vector<cplx>& data, bool inverse)
{
    const int n = int(data.size());
    run(data, 1, &n, inverse);
}

void transform_2d(std::vector<cplx>& data, int rows, int cols, bool inverse)
{
    const int dims[2] = {rows, cols};
    run(data, 2, dims, inverse);
}

} // namespace denza::fft

#include "denza/voxelizer.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/LU>

#include "denza/error.hpp"

namespace denza {

namespace {

struct Footprint {
    Eigen::Matrix3d precision; // Sigma^-1
    double denza = 0.0;
    int lo[3] = {0, 0, 0};
    int hi[3] = {-1, -1, -1};
    bool active = false;
};

Footprint footprint(const GaussianCloud& cloud, std::size_t i, const GridSpec& grid, double cutoff)
{
    Footprint f;
    const Eigen::Matrix3d sigma = covariance_from_scale_rotation(cloud.log_scales[i], cloud.rotations[i]);
    f.precision = sigma.inverse();
    f.denza = activate_denza(cloud.denza_raw[i]);
    const int dims[3] = {grid.nx, grid.ny, grid.nz};
    f.active = true;
    for (int a = 0; a < 3; ++a) {
        const double r = cutoff * std::sqrt(sigma(a, a));
        const double c = (cloud.positions[i][a] - grid.origin[a]) / grid.voxel_size - 0.5;
        f.lo[a] = std::max(0, int(std::ceil(c - r / grid.voxel_size)));
        f.hi[a] = std::min(dims[a] - 1, int(std::floor(c + r / grid.voxel_size)));
        if (f.lo[a] > f.hi[a])
            f.active = false;
    }
    return f;
}

std::vector<Footprint> footprints(const GaussianCloud& cloud, const GridSpec& grid, double cutoff)
{
    std::vector<Footprint> out(cloud.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(cloud.size()); ++i)
        out[i] = footprint(cloud, std::size_t(i), grid, cutoff);
    return out;
}

} // namespace

Volume voxelize(const GaussianCloud& cloud, const GridSpec& grid, double cutoff_sigma)
{
    grid.validate();
    Volume vol(grid);
    if (cloud.empty())
        return vol;
    const double cut2 = cutoff_sigma * cutoff_sigma;
    const std::vector<Footprint> fps = footprints(cloud, grid, cutoff_sigma);

    // Slab lists keep per-voxel accumulation order equal to cloud order.
    std::vector<std::vector<std::size_t>> slabs(grid.nz);
    for (std::size_t i = 0; i < fps.size(); ++i)
        if (fps[i].active)
            for (int k = fps[i].lo[2]; k <= fps[i].hi[2]; ++k)
                slabs[k].push_back(i);

#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < grid.nz; ++k) {
        for (std::size_t i : slabs[k]) {
            const Footprint& f = fps[i];
            const Vec3& mu = cloud.positions[i];
            for (int j = f.lo[1]; j <= f.hi[1]; ++j)
                for (int ii = f.lo[0]; ii <= f.hi[0]; ++ii) {
                    const Vec3 d = grid.voxel_center(ii, j, k) - mu;
                    const double m = d.dot(f.precision * d);
                    if (m > cut2)
                        continue;
                    vol.at(ii, j, k) += f.denza * std::exp(-0.5 * m);
                }
        }
    }
    return vol;
}

CloudGradients voxelize_backward(const GaussianCloud& cloud, const GridSpec& grid, const Volume& dL_dV,
                                 double cutoff_sigma)
{
    if (!(dL_dV.grid == grid) || dL_dV.data.size() != grid.voxel_count())
        throw ValidationError("volume gradient does not match the voxelization grid");
    CloudGradients out(cloud.size());
    const double cut2 = cutoff_sigma * cutoff_sigma;

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ii = 0; ii < std::ptrdiff_t(cloud.size()); ++ii) {
        const std::size_t i = std::size_t(ii);
        const Footprint f = footprint(cloud, i, grid, cutoff_sigma);
        if (!f.active)
            continue;
        const Vec3& mu = cloud.positions[i];
        double d_denza = 0.0;
        Vec3 d_mu = Vec3::Zero();
        Eigen::Matrix3d d_prec = Eigen::Matrix3d::Zero();
        for (int k = f.lo[2]; k <= f.hi[2]; ++k)
            for (int j = f.lo[1]; j <= f.hi[1]; ++j)
                for (int x = f.lo[0]; x <= f.hi[0]; ++x) {
                    const double g = dL_dV.at(x, j, k);
                    if (g == 0.0)
                        continue;
                    const Vec3 d = grid.voxel_center(x, j, k) - mu;
                    const Vec3 pd = f.precision * d;
                    const double m = d.dot(pd);
                    if (m > cut2)
                        continue;
                    const double e = std::exp(-0.5 * m);
                    d_denza += g * e;
                    const double gde = g * f.denza * e;
                    d_mu += gde * pd;
                    d_prec -= (0.5 * gde) * (d * d.transpose());
                }
        out.d_denza_raw[i] = d_denza * sigmoid(cloud.denza_raw[i]);
        out.d_positions[i] = d_mu;
        const Eigen::Matrix3d d_sigma = -f.precision * d_prec * f.precision;
        covariance_backward(cloud.log_scales[i], cloud.rotations[i], d_sigma, out.d_log_scales[i],
                            out.d_rotations[i]);
    }
    return out;
}

} // namespace denza

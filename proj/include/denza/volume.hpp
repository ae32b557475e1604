#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace denza {

/// Regular voxel grid. Voxel (i, j, k) has its center at
/// origin + (i + 0.5, j + 0.5, k + 0.5) * voxel_size, so `origin` is the
/// world position of the grid's lower corner.
struct GridSpec {
    int nx = 1;
    int ny = 1;
    int nz = 1;
    double voxel_size = 1.0;
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();

    /// Grid of n^3 unit voxels centered on the world origin.
    static GridSpec centered_cube(int n, double voxel_size = 1.0);

    std::size_t voxel_count() const { return std::size_t(nx) * ny * nz; }
    Eigen::Vector3d voxel_center(int i, int j, int k) const {
        return origin + voxel_size * Eigen::Vector3d(i + 0.5, j + 0.5, k + 0.5);
    }
    double max_extent() const;
    void validate() const;
    bool operator==(const GridSpec&) const = default;
};

/// Scalar field on a GridSpec, x-fastest storage.
struct Volume {
    GridSpec grid;
    std::vector<double> data;

    Volume() = default;
    explicit Volume(const GridSpec& g, double fill = 0.0)
        : grid(g), data(g.voxel_count(), fill) {}

    int nx() const { return grid.nx; }
    int ny() const { return grid.ny; }
    int nz() const { return grid.nz; }
    std::size_t index(int i, int j, int k) const {
        return (std::size_t(k) * grid.ny + j) * grid.nx + i;
    }
    double& at(int i, int j, int k) { return data[index(i, j, k)]; }
    double at(int i, int j, int k) const { return data[index(i, j, k)]; }

    /// Trilinear interpolation with zero padding outside the voxel centers.
    double sample(const Eigen::Vector3d& world) const;
};

} // namespace denza

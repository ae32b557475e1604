#pragma once

#include <cstddef>
#include <vector>

namespace denza {

/// One detector image. Pixel (u, v) is stored at data[v * nu + u].
struct ProjectionImage {
    int nu = 0;
    int nv = 0;
    std::size_t view = 0;
    double angle_deg = 0.0;
    std::vector<double> data;

    ProjectionImage() = default;
    ProjectionImage(int nu_, int nv_, double fill = 0.0)
        : nu(nu_), nv(nv_), data(std::size_t(nu_) * nv_, fill) {}

    std::size_t size() const { return data.size(); }
    double& at(int u, int v) { return data[std::size_t(v) * nu + u]; }
    double at(int u, int v) const { return data[std::size_t(v) * nu + u]; }
    bool same_shape(const ProjectionImage& o) const { return nu == o.nu && nv == o.nv; }
};

/// Images ordered like the geometry's angle list.
struct ProjectionStack {
    std::vector<ProjectionImage> images;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }
    const ProjectionImage& operator[](std::size_t i) const { return images[i]; }
    ProjectionImage& operator[](std::size_t i) { return images[i]; }
    std::vector<double> angles() const;
    double max_value() const;
    /// Images at the given indices, renumbered 0..n-1.
    ProjectionStack subset(const std::vector<std::size_t>& views) const;
};

} // namespace denza

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "denza/gaussians.hpp"
#include "denza/geometry.hpp"
#include "denza/projection.hpp"
#include "denza/volume.hpp"

namespace denza {

enum class RampFilter { RamLak, Hann };

/// Line integral of the trilinearly interpolated volume along each pixel-center
/// ray: midpoint rule with a step of half a voxel.
ProjectionImage project_volume(const Volume& vol, const TiltGeometry& geom, std::size_t view);
ProjectionStack project_all(const Volume& vol, const TiltGeometry& geom);

/// Exact adjoint of project_all onto `grid`.
Volume backproject(const ProjectionStack& residuals, const TiltGeometry& geom, const GridSpec& grid);

/// Filtered backprojection (per-slice FBP for parallel beams, FDK weighting for
/// cone beams), scaled by pi / number of views.
Volume fdk_reconstruct(const ProjectionStack& stack, const TiltGeometry& geom, const GridSpec& grid,
                       RampFilter filter);

struct SirtOptions {
    int iterations = 100;
    double relaxation = 1.0;
    bool nonneg = true;
    /// Called after each iteration with (iteration, residual norm before the update).
    std::function<void(int, double)> on_iteration;
};

/// v <- v + relaxation * C A^T R (p - A v), v0 = 0.
Volume sirt_reconstruct(const ProjectionStack& stack, const TiltGeometry& geom, const GridSpec& grid,
                        const SirtOptions& opts = {});

struct SeedOptions {
    std::size_t n_points = 20000;
    double threshold_percentile = 75.0;
    std::uint64_t rng_seed = 0;
};

/// Samples voxels at or above the intensity percentile, without replacement and
/// with probability proportional to intensity, into isotropic Gaussians.
GaussianCloud seed_cloud(const Volume& vol, const SeedOptions& opts);

} // namespace denza

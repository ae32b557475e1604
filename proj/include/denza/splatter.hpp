#pragma once

#include <cstddef>

#include "denza/gaussians.hpp"
#include "denza/geometry.hpp"
#include "denza/projection.hpp"

namespace denza {

struct RenderOptions {
    /// When false every splat is weighted by denza alone (gamma forced to 1).
    bool use_gamma = true;
};

/// Squared Mahalanobis radius beyond which a splat contributes nothing.
inline constexpr double kSplatCutoff2 = 9.0;
inline constexpr int kTileSize = 16;

/// Additive splatting: P(u) = sum_i gamma_i d_i exp(-0.5 (u - mu_i)^T cov2d_i^-1 (u - mu_i))
/// evaluated at pixel centers.
ProjectionImage render_view(const GaussianCloud& cloud, const TiltGeometry& geom, std::size_t view,
                            const RenderOptions& opts = {});

/// Exact gradients of sum_u dL_dP(u) * P(u) with respect to every cloud parameter.
CloudGradients render_backward(const GaussianCloud& cloud, const TiltGeometry& geom, std::size_t view,
                               const ProjectionImage& dL_dP, const RenderOptions& opts = {});

ProjectionStack render_all(const GaussianCloud& cloud, const TiltGeometry& geom,
                           const RenderOptions& opts = {});

} // namespace denza

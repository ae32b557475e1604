#pragma once

#include "denza/gaussians.hpp"
#include "denza/volume.hpp"

namespace denza {

/// V(x) = sum_i d_i exp(-0.5 (x - mu_i)^T Sigma_i^-1 (x - mu_i)) at voxel
/// centers, truncated at Mahalanobis radius `cutoff_sigma`.
Volume voxelize(const GaussianCloud& cloud, const GridSpec& grid, double cutoff_sigma = 3.0);

/// Gradients of sum_x dL_dV(x) V(x) with respect to every cloud parameter.
CloudGradients voxelize_backward(const GaussianCloud& cloud, const GridSpec& grid, const Volume& dL_dV,
                                 double cutoff_sigma = 3.0);

} // namespace denza

#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "denza/geometry.hpp"

namespace denza {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Vector4d; // (w, x, y, z)

/// Learnable scene: anisotropic 3D Gaussians carrying a scattering
/// coefficient (denza). Stored as parallel arrays; denza is kept in the
/// pre-activation domain.
struct GaussianCloud {
    std::vector<Vec3> positions;
    std::vector<Vec3> log_scales;
    std::vector<Quat> rotations;
    std::vector<double> denza_raw;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
    void reserve(std::size_t n);
    void push_back(const Vec3& position, const Vec3& log_scale, const Quat& rotation, double raw);
    /// Keep only entries whose mask value is true, preserving order.
    void compact(const std::vector<bool>& keep);
    void validate() const;
};

/// Per-Gaussian gradients, same layout as GaussianCloud.
struct CloudGradients {
    std::vector<Vec3> d_positions;
    std::vector<Vec3> d_log_scales;
    std::vector<Quat> d_rotations;
    std::vector<double> d_denza_raw;

    CloudGradients() = default;
    explicit CloudGradients(std::size_t n);
    std::size_t size() const { return d_positions.size(); }
    void add(const CloudGradients& other, double weight = 1.0);
    bool all_finite() const;
};

/// Cached projection of one Gaussian into one view.
struct SplatView {
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero(); // pixel coordinates
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity(); // pixel units squared
    double gamma = 1.0;
    double depth = 0.0;
    bool culled = false;
};

struct ProjectedCovariance {
    Eigen::Matrix2d cov2d;    // pixel units squared
    Eigen::Matrix3d cov_view; // world units squared, view frame
    bool culled = false;
};

/// Added to the cone-beam 2D covariance diagonal (pixel^2).
inline constexpr double kBlurFloor = 0.09;

double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);
/// Alias kept for readability at call sites that activate raw denza.
inline double activate_denza(double raw) { return softplus(raw); }

Quat normalized_quaternion(const Quat& q);
Eigen::Matrix3d rotation_from_quaternion(const Quat& q);

/// Sigma = R diag(exp(2 log_scale)) R^T.
Eigen::Matrix3d covariance_from_scale_rotation(const Vec3& log_scale, const Quat& q);

/// Back-propagates dL/dSigma (symmetric) to the log-scale and raw quaternion.
void covariance_backward(const Vec3& log_scale, const Quat& q, const Eigen::Matrix3d& dL_dsigma,
                         Vec3& d_log_scale, Quat& d_rotation);

ProjectedCovariance project_covariance(const Eigen::Matrix3d& sigma, const TiltGeometry& geom,
                                       std::size_t view, const Vec3& position);

/// gamma = sqrt(2 pi det(cov_view) / det(cov2d)), both in world units. For a
/// parallel beam this is the exact line integral of the unnormalized 3D
/// Gaussian through its center.
double gamma(const Eigen::Matrix3d& cov_view, const Eigen::Matrix2d& cov2d);

/// Line integral of exp(-x^T C^-1 x / 2) along the unit direction through the
/// center: sqrt(2 pi / (n^T C^-1 n)). Equals gamma() for n = beam axis.
double gamma_along(const Eigen::Matrix3d& cov_view, const Vec3& direction);

/// Full per-view preprocessing used by the splatter.
SplatView make_splat_view(const GaussianCloud& cloud, std::size_t i, const TiltGeometry& geom,
                          std::size_t view);

} // namespace denza

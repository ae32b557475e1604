#include "denza/gaussians.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/LU>

#include "denza/error.hpp"

namespace denza {

void GaussianCloud::reserve(std::size_t n)
{
    positions.reserve(n);
    log_scales.reserve(n);
    rotations.reserve(n);
    denza_raw.reserve(n);
}

void GaussianCloud::push_back(const Vec3& position, const Vec3& log_scale, const Quat& rotation, double raw)
{
    positions.push_back(position);
    log_scales.push_back(log_scale);
    rotations.push_back(rotation);
    denza_raw.push_back(raw);
}

void GaussianCloud::compact(const std::vector<bool>& keep)
{
    std::size_t out = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!keep[i])
            continue;
        positions[out] = positions[i];
        log_scales[out] = log_scales[i];
        rotations[out] = rotations[i];
        denza_raw[out] = denza_raw[i];
        ++out;
    }
    positions.resize(out);
    log_scales.resize(out);
    rotations.resize(out);
    denza_raw.resize(out);
}

void GaussianCloud::validate() const
{
    const std::size_t n = positions.size();
    if (log_scales.size() != n || rotations.size() != n || denza_raw.size() != n)
        throw ValidationError("gaussian cloud arrays have inconsistent lengths");
    for (std::size_t i = 0; i < n; ++i) {
        if (!positions[i].allFinite() || !log_scales[i].allFinite() || !rotations[i].allFinite() ||
            !std::isfinite(denza_raw[i]))
            throw ValidationError("gaussian " + std::to_string(i) + " has non-finite parameters");
        if (rotations[i].norm() < 1e-12)
            throw ValidationError("gaussian " + std::to_string(i) + " has a zero quaternion");
    }
}

CloudGradients::CloudGradients(std::size_t n)
    : d_positions(n, Vec3::Zero()), d_log_scales(n, Vec3::Zero()), d_rotations(n, Quat::Zero()),
      d_denza_raw(n, 0.0)
{
}

void CloudGradients::add(const CloudGradients& other, double weight)
{
    for (std::size_t i = 0; i < size(); ++i) {
        d_positions[i] += weight * other.d_positions[i];
        d_log_scales[i] += weight * other.d_log_scales[i];
        d_rotations[i] += weight * other.d_rotations[i];
        d_denza_raw[i] += weight * other.d_denza_raw[i];
    }
}

bool CloudGradients::all_finite() const
{
    for (std::size_t i = 0; i < size(); ++i)
        if (!d_positions[i].allFinite() || !d_log_scales[i].allFinite() || !d_rotations[i].allFinite() ||
            !std::isfinite(d_denza_raw[i]))
            return false;
    return true;
}

double softplus(double x)
{
    // log1p(exp(x)) without overflow
    return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y)
{
    if (!(y > 0.0))
        throw DomainError("softplus inverse needs a positive argument");
    return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

double sigmoid(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Quat normalized_quaternion(const Quat& q)
{
    const double n = q.norm();
    return n > 0.0 ? Quat(q / n) : Quat(1.0, 0.0, 0.0, 0.0);
}

Eigen::Matrix3d rotation_from_quaternion(const Quat& qin)
{
    const Quat q = normalized_quaternion(qin);
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d covariance_from_scale_rotation(const Vec3& log_scale, const Quat& q)
{
    const Eigen::Matrix3d r = rotation_from_quaternion(q);
    const Vec3 var = (2.0 * log_scale).array().exp();
    return r * var.asDiagonal() * r.transpose();
}

void covariance_backward(const Vec3& log_scale, const Quat& qin, const Eigen::Matrix3d& g,
                         Vec3& d_log_scale, Quat& d_rotation)
{
    const double qn = qin.norm();
    const Quat q = qin / qn;
    const Eigen::Matrix3d r = rotation_from_quaternion(q);
    const Vec3 var = (2.0 * log_scale).array().exp();

    // Sigma = sum_k var_k r_k r_k^T
    for (int k = 0; k < 3; ++k)
        d_log_scale[k] = 2.0 * var[k] * r.col(k).dot(g * r.col(k));

    // dL/dR = 2 G R D for symmetric G
    const Eigen::Matrix3d gr = 2.0 * g * r * var.asDiagonal();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Quat dq;
    dq[0] = 2 * (-z * gr(0, 1) + y * gr(0, 2) + z * gr(1, 0) - x * gr(1, 2) - y * gr(2, 0) + x * gr(2, 1));
    dq[1] = 2 * (y * gr(0, 1) + z * gr(0, 2) + y * gr(1, 0) - 2 * x * gr(1, 1) - w * gr(1, 2) + z * gr(2, 0) +
                 w * gr(2, 1) - 2 * x * gr(2, 2));
    dq[2] = 2 * (-2 * y * gr(0, 0) + x * gr(0, 1) + w * gr(0, 2) + x * gr(1, 0) + z * gr(1, 2) - w * gr(2, 0) +
                 z * gr(2, 1) - 2 * y * gr(2, 2));
    dq[3] = 2 * (-2 * z * gr(0, 0) - w * gr(0, 1) + x * gr(0, 2) + w * gr(1, 0) - 2 * z * gr(1, 1) + y * gr(1, 2) +
                 x * gr(2, 0) + y * gr(2, 1));
    // through q / |q|
    d_rotation = (dq - q * q.dot(dq)) / qn;
}

ProjectedCovariance project_covariance(const Eigen::Matrix3d& sigma, const TiltGeometry& geom,
                                       std::size_t view, const Vec3& position)
{
    const Eigen::Matrix3d& rv = geom.rotation(view);
    const double ps = geom.detector().pixel_size;
    ProjectedCovariance out;
    out.cov_view = rv * sigma * rv.transpose();
    if (!geom.is_cone()) {
        out.cov2d = out.cov_view.topLeftCorner<2, 2>() / (ps * ps);
        return out;
    }
    const Vec3 q = rv * position;
    const double w = geom.beam().source_distance + q.z();
    if (w <= 1e-9 * geom.beam().source_distance) {
        out.culled = true;
        out.cov2d = Eigen::Matrix2d::Identity();
        return out;
    }
    const double f = geom.source_to_detector() / (w * ps);
    Eigen::Matrix<double, 2, 3> j;
    j << f, 0.0, -f * q.x() / w,
         0.0, f, -f * q.y() / w;
    out.cov2d = j * out.cov_view * j.transpose();
    out.cov2d.diagonal().array() += kBlurFloor;
    return out;
}

double gamma(const Eigen::Matrix3d& cov_view, const Eigen::Matrix2d& cov2d)
{
    const double d2 = cov2d.determinant();
    if (!(d2 > 1e-300))
        throw ConditioningError("projected covariance determinant is not positive");
    return std::sqrt(2.0 * std::numbers::pi * cov_view.determinant() / d2);
}

double gamma_along(const Eigen::Matrix3d& cov_view, const Vec3& direction)
{
    const Vec3 n = direction.normalized();
    const double s = n.dot(cov_view.inverse() * n);
    if (!(s > 0.0))
        throw ConditioningError("view covariance is not positive definite");
    return std::sqrt(2.0 * std::numbers::pi / s);
}

SplatView make_splat_view(const GaussianCloud& cloud, std::size_t i, const TiltGeometry& geom,
                          std::size_t view)
{
    const Eigen::Matrix3d sigma = covariance_from_scale_rotation(cloud.log_scales[i], cloud.rotations[i]);
    SplatView sv;
    ProjectedCovariance pc = project_covariance(sigma, geom, view, cloud.positions[i]);
    if (pc.culled) {
        sv.culled = true;
        return sv;
    }
    const DetectorPoint dp = project_point(geom, view, cloud.positions[i]);
    sv.mean2d = {dp.u, dp.v};
    sv.depth = dp.depth;
    sv.cov2d = pc.cov2d;
    Vec3 dir(0.0, 0.0, 1.0);
    if (geom.is_cone()) {
        const Vec3 q = geom.rotation(view) * cloud.positions[i];
        const double w = geom.beam().source_distance + q.z();
        dir = Vec3(q.x() / w, q.y() / w, 1.0);
    }
    sv.gamma = gamma_along(pc.cov_view, dir);
    return sv;
}

} // namespace denza

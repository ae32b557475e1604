#include "denza/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "denza/error.hpp"

namespace denza {

void DetectorGrid::validate() const
{
    if (nu < 1 || nv < 1)
        throw ValidationError("detector must have at least one pixel per axis");
    if (!(pixel_size > 0.0) || !std::isfinite(pixel_size))
        throw ValidationError("detector pixel_size must be positive");
}

Eigen::Matrix3d view_rotation(double angle_deg)
{
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(a);
    const double s = std::sin(a);
    Eigen::Matrix3d r;
    r << c, 0.0, s,
         0.0, 1.0, 0.0,
         -s, 0.0, c;
    return r;
}

TiltGeometry::TiltGeometry(std::vector<double> angles_deg, DetectorGrid detector, BeamModel beam)
    : angles_(std::move(angles_deg)), detector_(detector), beam_(beam)
{
    detector_.validate();
    for (std::size_t i = 0; i < angles_.size(); ++i) {
        const double a = angles_[i];
        if (!std::isfinite(a) || std::abs(a) >= 90.0)
            throw ValidationError("tilt angle " + std::to_string(a) + " outside (-90, 90)");
        if (i > 0 && !(a > angles_[i - 1]))
            throw ValidationError("tilt angles must be strictly increasing");
    }
    if (beam_.kind == BeamKind::Cone) {
        const double half = 0.5 * std::max(detector_.nu, detector_.nv) * detector_.pixel_size;
        if (!(beam_.source_distance > half))
            throw ValidationError("cone beam source_distance must exceed the detector half-extent");
        if (beam_.detector_distance < 0.0)
            throw ValidationError("cone beam detector_distance must be non-negative");
    }
    rotations_.reserve(angles_.size());
    for (double a : angles_)
        rotations_.push_back(view_rotation(a));
}

const Eigen::Matrix3d& TiltGeometry::rotation(std::size_t view) const
{
    if (view >= rotations_.size())
        throw DomainError("view index " + std::to_string(view) + " out of range");
    return rotations_[view];
}

TiltGeometry TiltGeometry::subset(const std::vector<std::size_t>& views) const
{
    std::vector<double> a;
    a.reserve(views.size());
    for (std::size_t v : views) {
        if (v >= angles_.size())
            throw DomainError("view index " + std::to_string(v) + " out of range");
        a.push_back(angles_[v]);
    }
    return TiltGeometry(std::move(a), detector_, beam_);
}

std::vector<double> TiltGeometry::linspace_angles(double lo_deg, double hi_deg, std::size_t count)
{
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = 0.5 * (lo_deg + hi_deg);
        return out;
    }
    for (std::size_t i = 0; i < count; ++i)
        out[i] = lo_deg + (hi_deg - lo_deg) * double(i) / double(count - 1);
    return out;
}

Ray pixel_ray(const TiltGeometry& geom, std::size_t view, double u, double v)
{
    const Eigen::Matrix3d& r = geom.rotation(view);
    const DetectorGrid& det = geom.detector();
    if (!(u >= 0.0 && u < det.nu && v >= 0.0 && v < det.nv))
        throw DomainError("detector coordinate (" + std::to_string(u) + ", " + std::to_string(v) +
                          ") outside the detector");

    const double uw = (u - 0.5 * det.nu) * det.pixel_size;
    const double vw = (v - 0.5 * det.nv) * det.pixel_size;
    Ray ray;
    if (!geom.is_cone()) {
        ray.origin = r.transpose() * Eigen::Vector3d(uw, vw, 0.0);
        ray.direction = r.transpose().col(2);
    } else {
        const double d = geom.beam().source_distance;
        ray.origin = r.transpose() * Eigen::Vector3d(0.0, 0.0, -d);
        ray.direction = r.transpose() * Eigen::Vector3d(uw, vw, geom.source_to_detector()).normalized();
    }
    return ray;
}

DetectorPoint project_point(const TiltGeometry& geom, std::size_t view, const Eigen::Vector3d& p)
{
    const Eigen::Vector3d q = geom.rotation(view) * p;
    const DetectorGrid& det = geom.detector();
    double scale = 1.0;
    if (geom.is_cone()) {
        const double w = geom.beam().source_distance + q.z();
        if (!(w > 0.0))
            throw DomainError("point lies behind the cone-beam source");
        scale = geom.source_to_detector() / w;
    }
    return {q.x() * scale / det.pixel_size + 0.5 * det.nu,
            q.y() * scale / det.pixel_size + 0.5 * det.nv,
            q.z()};
}

} // namespace denza

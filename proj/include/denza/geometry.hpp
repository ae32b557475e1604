#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace denza {

struct DetectorGrid {
    int nu = 64;
    int nv = 64;
    double pixel_size = 1.0;

    void validate() const;
    bool operator==(const DetectorGrid&) const = default;
};

enum class BeamKind { Parallel, Cone };

/// Beam description. For cone beams the source sits `source_distance` upstream
/// of the tilt axis and the detector plane `detector_distance` downstream of it.
/// The convergence angle and probe sigma are carried for bookkeeping; the
/// forward model treats the probe as a point.
struct BeamModel {
    BeamKind kind = BeamKind::Parallel;
    double source_distance = 0.0;
    double detector_distance = 0.0;
    double convergence_angle_deg = 0.0;
    double probe_sigma = 0.0;

    bool operator==(const BeamModel&) const = default;
};

struct Ray {
    Eigen::Vector3d origin;
    Eigen::Vector3d direction;
};

/// Continuous detector coordinates (pixel i spans [i, i + 1)) plus the signed
/// depth of the point along the beam axis, measured from the tilt axis.
struct DetectorPoint {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
};

/// Rotation about the tilt (y / detector v) axis taking world coordinates to
/// the view frame (u, v, beam).
Eigen::Matrix3d view_rotation(double angle_deg);

/// Single-axis tilt series. Angles must be strictly increasing and inside
/// (-90, 90) degrees.
class TiltGeometry {
public:
    TiltGeometry() = default;
    TiltGeometry(std::vector<double> angles_deg, DetectorGrid detector, BeamModel beam = {});

    std::size_t num_views() const { return angles_.size(); }
    const std::vector<double>& angles_deg() const { return angles_; }
    double angle_deg(std::size_t view) const { return angles_.at(view); }
    const DetectorGrid& detector() const { return detector_; }
    const BeamModel& beam() const { return beam_; }
    bool is_cone() const { return beam_.kind == BeamKind::Cone; }

    /// Cached view_rotation for a view index; throws DomainError when out of range.
    const Eigen::Matrix3d& rotation(std::size_t view) const;

    /// Magnification factor numerator (source-to-detector distance).
    double source_to_detector() const { return beam_.source_distance + beam_.detector_distance; }

    TiltGeometry subset(const std::vector<std::size_t>& views) const;

    /// Evenly spaced angles over [lo, hi] inclusive.
    static std::vector<double> linspace_angles(double lo_deg, double hi_deg, std::size_t count);

private:
    std::vector<double> angles_;
    std::vector<Eigen::Matrix3d> rotations_;
    DetectorGrid detector_;
    BeamModel beam_;
};

/// Ray through continuous detector coordinate (u, v). Parallel rays start on
/// the plane through the tilt axis; cone rays start at the source point.
Ray pixel_ray(const TiltGeometry& geom, std::size_t view, double u, double v);

/// Inverse of pixel_ray: detector coordinates of a world point plus its depth.
DetectorPoint project_point(const TiltGeometry& geom, std::size_t view, const Eigen::Vector3d& p);

} // namespace denza

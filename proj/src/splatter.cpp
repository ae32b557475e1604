#include "denza/splatter.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/LU>

#include "denza/error.hpp"

namespace denza {

namespace {

struct Prepared {
    Eigen::Vector2d mean;
    Eigen::Matrix2d conic; // cov2d^-1
    double gamma = 1.0;
    double denza = 0.0;
    double weight = 0.0; // gamma * denza
    int u0 = 0, u1 = -1, v0 = 0, v1 = -1;
    bool active = false;
};

struct TileBins {
    int tiles_u = 0;
    int tiles_v = 0;
    std::vector<std::vector<std::size_t>> lists;
};

Prepared prepare(const GaussianCloud& cloud, std::size_t i, const TiltGeometry& geom, std::size_t view,
                 const RenderOptions& opts)
{
    Prepared p;
    const SplatView sv = make_splat_view(cloud, i, geom, view);
    if (sv.culled)
        return p;
    p.mean = sv.mean2d;
    p.conic = sv.cov2d.inverse();
    p.gamma = opts.use_gamma ? sv.gamma : 1.0;
    p.denza = activate_denza(cloud.denza_raw[i]);
    p.weight = p.gamma * p.denza;

    const DetectorGrid& det = geom.detector();
    const double ru = std::sqrt(kSplatCutoff2 * sv.cov2d(0, 0));
    const double rv = std::sqrt(kSplatCutoff2 * sv.cov2d(1, 1));
    // pixel centers sit at index + 0.5
    p.u0 = std::max(0, int(std::ceil(p.mean.x() - ru - 0.5)));
    p.u1 = std::min(det.nu - 1, int(std::floor(p.mean.x() + ru - 0.5)));
    p.v0 = std::max(0, int(std::ceil(p.mean.y() - rv - 0.5)));
    p.v1 = std::min(det.nv - 1, int(std::floor(p.mean.y() + rv - 0.5)));
    p.active = p.u0 <= p.u1 && p.v0 <= p.v1;
    return p;
}

std::vector<Prepared> prepare_all(const GaussianCloud& cloud, const TiltGeometry& geom, std::size_t view,
                                  const RenderOptions& opts)
{
    std::vector<Prepared> out(cloud.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(cloud.size()); ++i)
        out[i] = prepare(cloud, std::size_t(i), geom, view, opts);
    return out;
}

TileBins bin_tiles(const std::vector<Prepared>& prep, const DetectorGrid& det)
{
    TileBins bins;
    bins.tiles_u = (det.nu + kTileSize - 1) / kTileSize;
    bins.tiles_v = (det.nv + kTileSize - 1) / kTileSize;
    bins.lists.resize(std::size_t(bins.tiles_u) * bins.tiles_v);
    for (std::size_t i = 0; i < prep.size(); ++i) {
        const Prepared& p = prep[i];
        if (!p.active)
            continue;
        for (int tv = p.v0 / kTileSize; tv <= p.v1 / kTileSize; ++tv)
            for (int tu = p.u0 / kTileSize; tu <= p.u1 / kTileSize; ++tu)
                bins.lists[std::size_t(tv) * bins.tiles_u + tu].push_back(i);
    }
    return bins;
}

struct SplatGrad {
    double weight = 0.0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d conic = Eigen::Matrix2d::Zero();
};

} // namespace

ProjectionImage render_view(const GaussianCloud& cloud, const TiltGeometry& geom, std::size_t view,
                            const RenderOptions& opts)
{
    const DetectorGrid& det = geom.detector();
    ProjectionImage img(det.nu, det.nv);
    img.view = view;
    img.angle_deg = geom.angle_deg(view);
    if (cloud.empty())
        return img;

    const std::vector<Prepared> prep = prepare_all(cloud, geom, view, opts);
    const TileBins bins = bin_tiles(prep, det);

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < std::ptrdiff_t(bins.lists.size()); ++t) {
        const auto& list = bins.lists[t];
        if (list.empty())
            continue;
        const int tu = int(t % bins.tiles_u);
        const int tv = int(t / bins.tiles_u);
        const int ue = std::min(det.nu, (tu + 1) * kTileSize);
        const int ve = std::min(det.nv, (tv + 1) * kTileSize);
        const int ub = tu * kTileSize, vb = tv * kTileSize;
        double buf[kTileSize * kTileSize] = {};
        // Gaussian-major keeps per-pixel accumulation in cloud order
        for (std::size_t i : list) {
            const Prepared& p = prep[i];
            const int u0 = std::max(p.u0, ub), u1 = std::min(p.u1, ue - 1);
            const int v0 = std::max(p.v0, vb), v1 = std::min(p.v1, ve - 1);
            for (int v = v0; v <= v1; ++v) {
                const double dv = v + 0.5 - p.mean.y();
                for (int u = u0; u <= u1; ++u) {
                    const double du = u + 0.5 - p.mean.x();
                    const double m = p.conic(0, 0) * du * du + 2.0 * p.conic(0, 1) * du * dv +
                                     p.conic(1, 1) * dv * dv;
                    if (m > kSplatCutoff2)
                        continue;
                    buf[(v - vb) * kTileSize + (u - ub)] += p.weight * std::exp(-0.5 * m);
                }
            }
        }
        for (int v = vb; v < ve; ++v)
            for (int u = ub; u < ue; ++u)
                img.at(u, v) = buf[(v - vb) * kTileSize + (u - ub)];
    }
    return img;
}

CloudGradients render_backward(const GaussianCloud& cloud, const TiltGeometry& geom, std::size_t view,
                               const ProjectionImage& dL_dP, const RenderOptions& opts)
{
    const DetectorGrid& det = geom.detector();
    if (dL_dP.nu != det.nu || dL_dP.nv != det.nv)
        throw ValidationError("gradient image does not match the detector");
    const std::size_t n = cloud.size();
    CloudGradients out(n);
    if (n == 0)
        return out;

    const std::vector<Prepared> prep = prepare_all(cloud, geom, view, opts);
    const TileBins bins = bin_tiles(prep, det);

    // Per-tile partials, reduced below in fixed tile order.
    std::vector<std::vector<SplatGrad>> tile_grads(bins.lists.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < std::ptrdiff_t(bins.lists.size()); ++t) {
        const auto& list = bins.lists[t];
        if (list.empty())
            continue;
        std::vector<SplatGrad>& acc = tile_grads[t];
        acc.assign(list.size(), SplatGrad{});
        const int tu = int(t % bins.tiles_u);
        const int tv = int(t / bins.tiles_u);
        const int ue = std::min(det.nu, (tu + 1) * kTileSize);
        const int ve = std::min(det.nv, (tv + 1) * kTileSize);
        const int ub = tu * kTileSize, vb = tv * kTileSize;
        for (std::size_t k = 0; k < list.size(); ++k) {
            const Prepared& p = prep[list[k]];
            const int u0 = std::max(p.u0, ub), u1 = std::min(p.u1, ue - 1);
            const int v0 = std::max(p.v0, vb), v1 = std::min(p.v1, ve - 1);
            SplatGrad& sg = acc[k];
            for (int v = v0; v <= v1; ++v) {
                for (int u = u0; u <= u1; ++u) {
                    const double g = dL_dP.at(u, v);
                    if (g == 0.0)
                        continue;
                    const Eigen::Vector2d d(u + 0.5 - p.mean.x(), v + 0.5 - p.mean.y());
                    const Eigen::Vector2d ad = p.conic * d;
                    const double m = d.dot(ad);
                    if (m > kSplatCutoff2)
                        continue;
                    const double ge = g * std::exp(-0.5 * m);
                    sg.weight += ge;
                    sg.mean += (ge * p.weight) * ad;
                    sg.conic -= (0.5 * ge * p.weight) * (d * d.transpose());
                }
            }
        }
    }

    std::vector<SplatGrad> total(n);
    for (std::size_t t = 0; t < bins.lists.size(); ++t) {
        const auto& list = bins.lists[t];
        for (std::size_t k = 0; k < tile_grads[t].size(); ++k) {
            SplatGrad& dst = total[list[k]];
            const SplatGrad& src = tile_grads[t][k];
            dst.weight += src.weight;
            dst.mean += src.mean;
            dst.conic += src.conic;
        }
    }

    const Eigen::Matrix3d& rv = geom.rotation(view);
    const double ps = det.pixel_size;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < std::ptrdiff_t(n); ++ii) {
        const std::size_t i = std::size_t(ii);
        const Prepared& p = prep[i];
        const SplatGrad& sg = total[i];
        if (!p.active)
            continue;

        out.d_denza_raw[i] = sg.weight * p.gamma * sigmoid(cloud.denza_raw[i]);
        const double d_gamma = opts.use_gamma ? sg.weight * p.denza : 0.0;
        const Eigen::Matrix2d d_cov2d = -p.conic * sg.conic * p.conic;

        const Eigen::Matrix3d sigma = covariance_from_scale_rotation(cloud.log_scales[i], cloud.rotations[i]);
        const Eigen::Matrix3d cv = rv * sigma * rv.transpose();
        const Eigen::Matrix3d cv_inv = cv.inverse();
        const Vec3 q = rv * cloud.positions[i];

        Vec3 d_q = Vec3::Zero();
        Eigen::Matrix3d d_cv = Eigen::Matrix3d::Zero();
        Vec3 n_unit(0.0, 0.0, 1.0);
        double w = 0.0;
        Vec3 n_raw(0.0, 0.0, 1.0);

        if (!geom.is_cone()) {
            d_q.x() = sg.mean.x() / ps;
            d_q.y() = sg.mean.y() / ps;
            d_cv.topLeftCorner<2, 2>() = d_cov2d / (ps * ps);
        } else {
            const double k = geom.source_to_detector();
            w = geom.beam().source_distance + q.z();
            const double f = k / (w * ps);
            // mean = f * (x, y) + detector center
            d_q.x() += sg.mean.x() * f;
            d_q.y() += sg.mean.y() * f;
            d_q.z() += -(sg.mean.x() * q.x() + sg.mean.y() * q.y()) * f / w;

            Eigen::Matrix<double, 2, 3> j;
            j << f, 0.0, -f * q.x() / w,
                 0.0, f, -f * q.y() / w;
            d_cv += j.transpose() * d_cov2d * j;
            const Eigen::Matrix<double, 2, 3> d_j = 2.0 * d_cov2d * j * cv;
            d_q.x() += d_j(0, 2) * (-f / w);
            d_q.y() += d_j(1, 2) * (-f / w);
            d_q.z() += (d_j(0, 0) + d_j(1, 1)) * (-f / w) + d_j(0, 2) * (2.0 * f * q.x() / (w * w)) +
                       d_j(1, 2) * (2.0 * f * q.y() / (w * w));
            n_raw = Vec3(q.x() / w, q.y() / w, 1.0);
            n_unit = n_raw.normalized();
        }

        if (d_gamma != 0.0) {
            const Vec3 cn = cv_inv * n_unit;
            const double s = n_unit.dot(cn);
            d_cv += (d_gamma * p.gamma / (2.0 * s)) * (cn * cn.transpose());
            if (geom.is_cone()) {
                const Vec3 d_n = (-d_gamma * p.gamma / s) * cn;
                const Vec3 d_nraw = (d_n - n_unit * n_unit.dot(d_n)) / n_raw.norm();
                d_q.x() += d_nraw.x() / w;
                d_q.y() += d_nraw.y() / w;
                d_q.z() += -(d_nraw.x() * q.x() + d_nraw.y() * q.y()) / (w * w);
            }
        }

        out.d_positions[i] = rv.transpose() * d_q;
        const Eigen::Matrix3d d_sigma = rv.transpose() * d_cv * rv;
        covariance_backward(cloud.log_scales[i], cloud.rotations[i], d_sigma, out.d_log_scales[i],
                            out.d_rotations[i]);
    }
    return out;
}

ProjectionStack render_all(const GaussianCloud& cloud, const TiltGeometry& geom, const RenderOptions& opts)
{
    ProjectionStack stack;
    stack.images.reserve(geom.num_views());
    for (std::size_t v = 0; v < geom.num_views(); ++v)
        stack.images.push_back(render_view(cloud, geom, v, opts));
    return stack;
}

} // namespace denza

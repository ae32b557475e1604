#include "denza/classical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <unordered_map>

#include "denza/error.hpp"
#include "denza/fft.hpp"

namespace denza {

// ---------------------------------------------------------------------------
// Shared grid / stack helpers

GridSpec GridSpec::centered_cube(int n, double voxel_size)
{
    GridSpec g;
    g.nx = g.ny = g.nz = n;
    g.voxel_size = voxel_size;
    g.origin = Eigen::Vector3d::Constant(-0.5 * n * voxel_size);
    return g;
}

double GridSpec::max_extent() const
{
    return std::max({nx, ny, nz}) * voxel_size;
}

void GridSpec::validate() const
{
    if (nx < 1 || ny < 1 || nz < 1)
        throw ValidationError("grid dimensions must be at least 1");
    if (!(voxel_size > 0.0) || !std::isfinite(voxel_size))
        throw ValidationError("voxel_size must be positive");
    if (!origin.allFinite())
        throw ValidationError("grid origin must be finite");
}

double Volume::sample(const Eigen::Vector3d& world) const
{
    const Eigen::Vector3d g = (world - grid.origin) / grid.voxel_size - Eigen::Vector3d::Constant(0.5);
    const double fx = std::floor(g.x()), fy = std::floor(g.y()), fz = std::floor(g.z());
    const int i0 = int(fx), j0 = int(fy), k0 = int(fz);
    const double tx = g.x() - fx, ty = g.y() - fy, tz = g.z() - fz;
    double acc = 0.0;
    for (int dk = 0; dk < 2; ++dk) {
        const int k = k0 + dk;
        if (k < 0 || k >= grid.nz)
            continue;
        const double wz = dk ? tz : 1.0 - tz;
        for (int dj = 0; dj < 2; ++dj) {
            const int j = j0 + dj;
            if (j < 0 || j >= grid.ny)
                continue;
            const double wy = dj ? ty : 1.0 - ty;
            for (int di = 0; di < 2; ++di) {
                const int i = i0 + di;
                if (i < 0 || i >= grid.nx)
                    continue;
                acc += (di ? tx : 1.0 - tx) * wy * wz * at(i, j, k);
            }
        }
    }
    return acc;
}

std::vector<double> ProjectionStack::angles() const
{
    std::vector<double> a;
    a.reserve(images.size());
    for (const auto& im : images)
        a.push_back(im.angle_deg);
    return a;
}

double ProjectionStack::max_value() const
{
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& im : images)
        for (double x : im.data)
            m = std::max(m, x);
    return m;
}

ProjectionStack ProjectionStack::subset(const std::vector<std::size_t>& views) const
{
    ProjectionStack out;
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (views[i] >= images.size())
            throw DomainError("view index " + std::to_string(views[i]) + " out of range");
        out.images.push_back(images[views[i]]);
        out.images.back().view = i;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ray-driven projector and its adjoint

namespace {

// Parametric interval of the ray inside the support of the interpolated volume.
bool clip_ray(const Ray& ray, const GridSpec& grid, bool forward_only, double& t0, double& t1)
{
    const Eigen::Vector3d lo = grid.origin - Eigen::Vector3d::Constant(0.5 * grid.voxel_size);
    const Eigen::Vector3d hi =
        grid.origin + grid.voxel_size * Eigen::Vector3d(grid.nx + 0.5, grid.ny + 0.5, grid.nz + 0.5);
    t0 = forward_only ? 0.0 : -std::numeric_limits<double>::infinity();
    t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double o = ray.origin[a];
        const double d = ray.direction[a];
        if (std::abs(d) < 1e-15) {
            if (o <= lo[a] || o >= hi[a])
                return false;
            continue;
        }
        double ta = (lo[a] - o) / d;
        double tb = (hi[a] - o) / d;
        if (ta > tb)
            std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t1 > t0;
}

struct TrilinearStencil {
    std::size_t idx[8];
    double w[8];
    int count = 0;
};

void stencil(const GridSpec& grid, const Eigen::Vector3d& world, TrilinearStencil& s)
{
    s.count = 0;
    const Eigen::Vector3d g = (world - grid.origin) / grid.voxel_size - Eigen::Vector3d::Constant(0.5);
    const double fx = std::floor(g.x()), fy = std::floor(g.y()), fz = std::floor(g.z());
    const int i0 = int(fx), j0 = int(fy), k0 = int(fz);
    const double tx = g.x() - fx, ty = g.y() - fy, tz = g.z() - fz;
    for (int dk = 0; dk < 2; ++dk) {
        const int k = k0 + dk;
        if (k < 0 || k >= grid.nz)
            continue;
        const double wz = dk ? tz : 1.0 - tz;
        for (int dj = 0; dj < 2; ++dj) {
            const int j = j0 + dj;
            if (j < 0 || j >= grid.ny)
                continue;
            const double wy = dj ? ty : 1.0 - ty;
            for (int di = 0; di < 2; ++di) {
                const int i = i0 + di;
                if (i < 0 || i >= grid.nx)
                    continue;
                s.idx[s.count] = (std::size_t(k) * grid.ny + j) * grid.nx + i;
                s.w[s.count] = (di ? tx : 1.0 - tx) * wy * wz;
                ++s.count;
            }
        }
    }
}

// Visits every (voxel, weight) pair of one pixel's line integral.
template <typename Fn>
void march(const GridSpec& grid, const TiltGeometry& geom, std::size_t view, int u, int v, Fn&& fn)
{
    const Ray ray = pixel_ray(geom, view, u + 0.5, v + 0.5);
    double t0 = 0.0, t1 = 0.0;
    if (!clip_ray(ray, grid, geom.is_cone(), t0, t1))
        return;
    const double h = 0.5 * grid.voxel_size;
    const int steps = int(std::ceil((t1 - t0) / h));
    TrilinearStencil s;
    for (int k = 0; k < steps; ++k) {
        const double t = t0 + (k + 0.5) * h;
        stencil(grid, ray.origin + t * ray.direction, s);
        for (int c = 0; c < s.count; ++c)
            fn(s.idx[c], s.w[c] * h);
    }
}

void check_stack(const ProjectionStack& stack, const TiltGeometry& geom)
{
    if (stack.size() != geom.num_views())
        throw ValidationError("stack has " + std::to_string(stack.size()) + " images but geometry has " +
                              std::to_string(geom.num_views()) + " angles");
    for (const auto& im : stack.images)
        if (im.nu != geom.detector().nu || im.nv != geom.detector().nv)
            throw ValidationError("stack image dimensions do not match the detector");
}

} // namespace

ProjectionImage project_volume(const Volume& vol, const TiltGeometry& geom, std::size_t view)
{
    const DetectorGrid& det = geom.detector();
    ProjectionImage img(det.nu, det.nv);
    img.view = view;
    img.angle_deg = geom.angle_deg(view);
#pragma omp parallel for schedule(static)
    for (int v = 0; v < det.nv; ++v) {
        for (int u = 0; u < det.nu; ++u) {
            double acc = 0.0;
            march(vol.grid, geom, view, u, v, [&](std::size_t idx, double w) { acc += w * vol.data[idx]; });
            img.at(u, v) = acc;
        }
    }
    return img;
}

ProjectionStack project_all(const Volume& vol, const TiltGeometry& geom)
{
    ProjectionStack stack;
    for (std::size_t v = 0; v < geom.num_views(); ++v)
        stack.images.push_back(project_volume(vol, geom, v));
    return stack;
}

Volume backproject(const ProjectionStack& residuals, const TiltGeometry& geom, const GridSpec& grid)
{
    check_stack(residuals, geom);
    Volume out(grid);
    const DetectorGrid& det = geom.detector();
    for (std::size_t view = 0; view < geom.num_views(); ++view) {
        const ProjectionImage& r = residuals[view];
        for (int v = 0; v < det.nv; ++v)
            for (int u = 0; u < det.nu; ++u) {
                const double val = r.at(u, v);
                if (val == 0.0)
                    continue;
                march(grid, geom, view, u, v, [&](std::size_t idx, double w) { out.data[idx] += w * val; });
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Filtered backprojection

namespace {

// Band-limited ramp response (spatial Ram-Lak kernel, transformed), length `len`.
std::vector<double> ramp_response(int len, double spacing, RampFilter filter)
{
    std::vector<fft::cplx> h(len, 0.0);
    for (int n = -len / 2; n < len / 2; ++n) {
        double val = 0.0;
        if (n == 0)
            val = 1.0 / (4.0 * spacing * spacing);
        else if (n % 2 != 0)
            val = -1.0 / (double(n) * n * std::numbers::pi * std::numbers::pi * spacing * spacing);
        h[(n + len) % len] = val;
    }
    fft::transform_1d(h, false);
    std::vector<double> resp(len);
    for (int k = 0; k < len; ++k) {
        double r = h[k].real() * spacing;
        if (filter == RampFilter::Hann) {
            const double f = double(k <= len / 2 ? k : k - len) / len; // cycles / sample
            r *= 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * f));
        }
        resp[k] = r;
    }
    return resp;
}

double bilinear(const ProjectionImage& img, double x, double y)
{
    const double fx = std::floor(x), fy = std::floor(y);
    const int u0 = int(fx), v0 = int(fy);
    const double tx = x - fx, ty = y - fy;
    double acc = 0.0;
    for (int dv = 0; dv < 2; ++dv) {
        const int v = v0 + dv;
        if (v < 0 || v >= img.nv)
            continue;
        for (int du = 0; du < 2; ++du) {
            const int u = u0 + du;
            if (u < 0 || u >= img.nu)
                continue;
            acc += (du ? tx : 1.0 - tx) * (dv ? ty : 1.0 - ty) * img.at(u, v);
        }
    }
    return acc;
}

} // namespace

Volume fdk_reconstruct(const ProjectionStack& stack, const TiltGeometry& geom, const GridSpec& grid,
                       RampFilter filter)
{
    check_stack(stack, geom);
    if (geom.num_views() < 2)
        throw ValidationError("filtered backprojection needs at least two views");
    grid.validate();

    const DetectorGrid& det = geom.detector();
    const bool cone = geom.is_cone();
    const double src = geom.beam().source_distance;
    // Detector spacing referred to the tilt-axis plane.
    const double iso_scale = cone ? src / geom.source_to_detector() : 1.0;
    const double spacing = det.pixel_size * iso_scale;

    int len = 1;
    while (len < 2 * det.nu)
        len <<= 1;
    const std::vector<double> resp = ramp_response(len, spacing, filter);

    ProjectionStack filtered = stack;
    for (auto& img : filtered.images) {
        std::vector<fft::cplx> row(len);
        for (int v = 0; v < det.nv; ++v) {
            std::fill(row.begin(), row.end(), fft::cplx(0.0));
            for (int u = 0; u < det.nu; ++u) {
                double val = img.at(u, v);
                if (cone) {
                    const double uw = (u + 0.5 - 0.5 * det.nu) * spacing;
                    const double vw = (v + 0.5 - 0.5 * det.nv) * spacing;
                    val *= src / std::sqrt(src * src + uw * uw + vw * vw);
                }
                row[u] = val;
            }
            fft::transform_1d(row, false);
            for (int k = 0; k < len; ++k)
                row[k] *= resp[k];
            fft::transform_1d(row, true);
            for (int u = 0; u < det.nu; ++u)
                img.at(u, v) = row[u].real() / len;
        }
    }

    Volume out(grid);
    const double scale = std::numbers::pi / double(geom.num_views());
    for (std::size_t view = 0; view < geom.num_views(); ++view) {
        const Eigen::Matrix3d& r = geom.rotation(view);
        const ProjectionImage& img = filtered[view];
#pragma omp parallel for schedule(static)
        for (int k = 0; k < grid.nz; ++k)
            for (int j = 0; j < grid.ny; ++j)
                for (int i = 0; i < grid.nx; ++i) {
                    const Eigen::Vector3d q = r * grid.voxel_center(i, j, k);
                    double mag = 1.0;
                    double weight = 1.0;
                    if (cone) {
                        const double w = src + q.z();
                        if (w <= 0.0)
                            continue;
                        mag = geom.source_to_detector() / w;
                        weight = (src / w) * (src / w);
                    }
                    const double x = q.x() * mag / det.pixel_size + 0.5 * det.nu - 0.5;
                    const double y = q.y() * mag / det.pixel_size + 0.5 * det.nv - 0.5;
                    out.at(i, j, k) += scale * weight * bilinear(img, x, y);
                }
    }
    return out;
}

// ---------------------------------------------------------------------------
// SIRT

Volume sirt_reconstruct(const ProjectionStack& stack, const TiltGeometry& geom, const GridSpec& grid,
                        const SirtOptions& opts)
{
    check_stack(stack, geom);
    grid.validate();
    if (opts.iterations < 1)
        throw ValidationError("SIRT needs at least one iteration");
    if (!(opts.relaxation > 0.0 && opts.relaxation <= 2.0))
        throw ValidationError("SIRT relaxation must lie in (0, 2]");

    const Volume ones_vol(grid, 1.0);
    ProjectionStack row_sum = project_all(ones_vol, geom);
    ProjectionStack ones_stack = row_sum;
    for (auto& im : ones_stack.images)
        std::fill(im.data.begin(), im.data.end(), 1.0);
    const Volume col_sum = backproject(ones_stack, geom, grid);

    Volume vol(grid);
    for (int it = 0; it < opts.iterations; ++it) {
        ProjectionStack resid = project_all(vol, geom);
        double norm2 = 0.0;
        for (std::size_t view = 0; view < resid.size(); ++view) {
            auto& r = resid[view].data;
            const auto& p = stack[view].data;
            const auto& rs = row_sum[view].data;
            for (std::size_t px = 0; px < r.size(); ++px) {
                const double e = p[px] - r[px];
                norm2 += e * e;
                r[px] = rs[px] > 1e-12 ? e / rs[px] : 0.0;
            }
        }
        const Volume upd = backproject(resid, geom, grid);
        for (std::size_t i = 0; i < vol.data.size(); ++i) {
            if (col_sum.data[i] > 1e-12)
                vol.data[i] += opts.relaxation * upd.data[i] / col_sum.data[i];
            if (opts.nonneg && vol.data[i] < 0.0)
                vol.data[i] = 0.0;
        }
        if (opts.on_iteration)
            opts.on_iteration(it, std::sqrt(norm2));
    }
    return vol;
}

// ---------------------------------------------------------------------------
// Point-cloud seeding

namespace {

double mean_nearest_neighbor(const std::vector<Vec3>& pts)
{
    if (pts.size() < 2)
        return 1.0;
    Vec3 lo = pts[0], hi = pts[0];
    for (const Vec3& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Vec3 ext = (hi - lo).cwiseMax(Vec3::Constant(1e-9));
    const double cell = std::max(std::cbrt(ext.prod() / double(pts.size())) * 1.5, 1e-9);
    const Eigen::Vector3i dims = ((ext / cell).array().floor().cast<int>() + 1).matrix();

    auto cell_of = [&](const Vec3& p) -> Eigen::Vector3i {
        return ((p - lo) / cell).array().floor().cast<int>().min(dims.array() - 1).matrix();
    };
    auto key = [&](const Eigen::Vector3i& c) {
        return (std::int64_t(c.z()) * dims.y() + c.y()) * dims.x() + c.x();
    };
    std::unordered_map<std::int64_t, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < pts.size(); ++i)
        cells[key(cell_of(pts[i]))].push_back(i);

    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Eigen::Vector3i c = cell_of(pts[i]);
        double best = std::numeric_limits<double>::infinity();
        for (int ring = 1;; ++ring) {
            for (int dz = -ring; dz <= ring; ++dz)
                for (int dy = -ring; dy <= ring; ++dy)
                    for (int dx = -ring; dx <= ring; ++dx) {
                        const Eigen::Vector3i n = c + Eigen::Vector3i(dx, dy, dz);
                        if ((n.array() < 0).any() || (n.array() >= dims.array()).any())
                            continue;
                        auto it = cells.find(key(n));
                        if (it == cells.end())
                            continue;
                        for (std::size_t j : it->second)
                            if (j != i)
                                best = std::min(best, (pts[j] - pts[i]).norm());
                    }
            // every point within ring * cell has been visited
            if (best <= ring * cell || ring > dims.maxCoeff())
                break;
        }
        total += best;
    }
    return total / double(pts.size());
}

} // namespace

GaussianCloud seed_cloud(const Volume& vol, const SeedOptions& opts)
{
    if (!(opts.threshold_percentile >= 0.0 && opts.threshold_percentile < 100.0))
        throw ValidationError("threshold_percentile must lie in [0, 100)");
    GaussianCloud cloud;
    if (opts.n_points == 0)
        return cloud;

    std::vector<double> sorted = vol.data;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t rank =
        std::min(sorted.size() - 1, std::size_t(std::floor(opts.threshold_percentile / 100.0 * sorted.size())));
    const double threshold = sorted[rank];

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < vol.data.size(); ++i)
        if (vol.data[i] >= threshold && vol.data[i] > 0.0)
            candidates.push_back(i);
    if (candidates.size() < opts.n_points)
        throw SeedingError("only " + std::to_string(candidates.size()) + " voxels above the " +
                           std::to_string(opts.threshold_percentile) + "th percentile, " +
                           std::to_string(opts.n_points) + " requested");

    // Weighted sampling without replacement: keep the largest log(u) / w keys.
    std::mt19937_64 rng(opts.rng_seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<double, std::size_t>> keys;
    keys.reserve(candidates.size());
    for (std::size_t idx : candidates) {
        const double u = std::max(unif(rng), std::numeric_limits<double>::min());
        keys.emplace_back(std::log(u) / vol.data[idx], idx);
    }
    std::partial_sort(keys.begin(), keys.begin() + std::ptrdiff_t(opts.n_points), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });

    const GridSpec& g = vol.grid;
    std::vector<Vec3> pts;
    std::vector<double> raw;
    pts.reserve(opts.n_points);
    for (std::size_t s = 0; s < opts.n_points; ++s) {
        const std::size_t idx = keys[s].second;
        const int i = int(idx % g.nx);
        const int j = int((idx / g.nx) % g.ny);
        const int k = int(idx / (std::size_t(g.nx) * g.ny));
        Vec3 jitter(unif(rng) - 0.5, unif(rng) - 0.5, unif(rng) - 0.5);
        pts.push_back(g.voxel_center(i, j, k) + g.voxel_size * jitter);
        raw.push_back(softplus_inverse(std::max(vol.data[idx], 1e-3)));
    }

    const double scale = 0.7 * mean_nearest_neighbor(pts);
    const Vec3 log_scale = Vec3::Constant(std::log(scale));
    cloud.reserve(pts.size());
    for (std::size_t s = 0; s < pts.size(); ++s)
        cloud.push_back(pts[s], log_scale, Quat(1.0, 0.0, 0.0, 0.0), raw[s]);
    return cloud;
}

} // namespace denza

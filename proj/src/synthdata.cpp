#include "denza/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "denza/classical.hpp"
#include "denza/error.hpp"

namespace denza {

namespace {

double primitive_value(const Primitive& p, const Eigen::Vector3d& x)
{
    const Eigen::Vector3d d = x - p.center;
    switch (p.shape) {
    case PrimitiveShape::Sphere:
        return d.squaredNorm() <= p.radius * p.radius ? p.value : 0.0;
    case PrimitiveShape::Shell: {
        const double r2 = d.squaredNorm();
        return (r2 <= p.radius * p.radius && r2 > p.inner_radius * p.inner_radius) ? p.value : 0.0;
    }
    case PrimitiveShape::Box:
        return (d.array().abs() <= p.half_extents.array()).all() ? p.value : 0.0;
    case PrimitiveShape::Blob:
        return p.value * std::exp(-0.5 * (d.array() / p.sigmas.array()).square().sum());
    }
    return 0.0;
}

Eigen::Vector3d primitive_half_size(const Primitive& p)
{
    switch (p.shape) {
    case PrimitiveShape::Sphere:
    case PrimitiveShape::Shell:
        return Eigen::Vector3d::Constant(p.radius);
    case PrimitiveShape::Box:
        return p.half_extents;
    case PrimitiveShape::Blob:
        return 3.0 * p.sigmas;
    }
    return Eigen::Vector3d::Zero();
}

void validate_primitive(const Primitive& p, const GridSpec& grid, std::size_t index)
{
    const std::string tag = "primitive " + std::to_string(index);
    if (!(p.value > 0.0))
        throw ValidationError(tag + ": denza value must be positive");
    if (p.shape == PrimitiveShape::Shell && !(p.inner_radius >= 0.0 && p.inner_radius < p.radius))
        throw ValidationError(tag + ": shell needs 0 <= inner_radius < radius");
    if ((p.shape == PrimitiveShape::Sphere || p.shape == PrimitiveShape::Shell) && !(p.radius > 0.0))
        throw ValidationError(tag + ": radius must be positive");
    if (p.shape == PrimitiveShape::Blob && !(p.sigmas.array() > 0.0).all())
        throw ValidationError(tag + ": blob sigmas must be positive");
    const Eigen::Vector3d lo = grid.origin;
    const Eigen::Vector3d hi = grid.origin + grid.voxel_size * Eigen::Vector3d(grid.nx, grid.ny, grid.nz);
    const Eigen::Vector3d h = primitive_half_size(p);
    if (((p.center - h).array() < lo.array()).any() || ((p.center + h).array() > hi.array()).any())
        throw ValidationError(tag + ": out of the grid bounds");
}

void blur_image(ProjectionImage& img, double sigma_px)
{
    if (!(sigma_px > 0.0))
        return;
    const int r = int(std::ceil(3.0 * sigma_px));
    std::vector<double> k(2 * r + 1);
    double s = 0.0;
    for (int i = -r; i <= r; ++i)
        s += k[i + r] = std::exp(-0.5 * i * i / (sigma_px * sigma_px));
    for (double& x : k)
        x /= s;
    ProjectionImage tmp = img;
    for (int v = 0; v < img.nv; ++v)
        for (int u = 0; u < img.nu; ++u) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i)
                if (u + i >= 0 && u + i < img.nu)
                    acc += k[i + r] * img.at(u + i, v);
            tmp.at(u, v) = acc;
        }
    for (int v = 0; v < img.nv; ++v)
        for (int u = 0; u < img.nu; ++u) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i)
                if (v + i >= 0 && v + i < img.nv)
                    acc += k[i + r] * tmp.at(u, v + i);
            img.at(u, v) = acc;
        }
}

} // namespace

Volume build_phantom(const PhantomSpec& spec)
{
    spec.grid.validate();
    for (std::size_t i = 0; i < spec.primitives.size(); ++i)
        validate_primitive(spec.primitives[i], spec.grid, i);

    Volume vol(spec.grid);
    const GridSpec& g = spec.grid;
#pragma omp parallel for schedule(static)
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const Eigen::Vector3d c = g.voxel_center(i, j, k);
                double acc = 0.0;
                for (int s = 0; s < 8; ++s) {
                    const Eigen::Vector3d off((s & 1) ? 0.25 : -0.25, (s & 2) ? 0.25 : -0.25,
                                              (s & 4) ? 0.25 : -0.25);
                    const Eigen::Vector3d x = c + g.voxel_size * off;
                    for (const Primitive& p : spec.primitives)
                        acc += primitive_value(p, x);
                }
                vol.at(i, j, k) = acc / 8.0;
            }
    return vol;
}

ProjectionStack simulate_tilt_series(const Volume& vol, const TiltGeometry& geom, const NoiseModel& noise)
{
    if (!(noise.dose >= 0.0) || !(noise.gaussian_sigma >= 0.0))
        throw ValidationError("noise dose and gaussian_sigma must be non-negative");
    ProjectionStack stack = project_all(vol, geom);
    if (noise.probe_blur)
        for (auto& img : stack.images)
            blur_image(img, geom.beam().probe_sigma / geom.detector().pixel_size);
    if (noise.dose == 0.0 && noise.gaussian_sigma == 0.0)
        return stack;

    std::mt19937_64 rng(noise.rng_seed);
    std::normal_distribution<double> read_noise(0.0, 1.0);
    for (auto& img : stack.images)
        for (double& x : img.data) {
            if (noise.dose > 0.0) {
                const double mean = noise.dose * x;
                x = mean > 0.0 ? double(std::poisson_distribution<long long>(mean)(rng)) / noise.dose : 0.0;
            }
            if (noise.gaussian_sigma > 0.0)
                x += noise.gaussian_sigma * read_noise(rng);
            x = std::max(x, 0.0);
        }
    return stack;
}

ViewSplit split_views(std::size_t n_views, const SplitPattern& pattern)
{
    ViewSplit out;
    switch (pattern.kind) {
    case SplitPattern::Kind::EveryKthHeldOut:
    case SplitPattern::Kind::EveryKthKept: {
        if (pattern.k < 1)
            throw ValidationError("split stride k must be at least 1");
        const bool kept = pattern.kind == SplitPattern::Kind::EveryKthKept;
        for (std::size_t i = 0; i < n_views; ++i) {
            const bool marked = int(i % std::size_t(pattern.k)) == pattern.k / 2;
            ((marked == kept) ? out.train : out.test).push_back(i);
        }
        break;
    }
    case SplitPattern::Kind::Explicit: {
        std::set<std::size_t> seen;
        for (const auto* list : {&pattern.train, &pattern.test})
            for (std::size_t v : *list) {
                if (v >= n_views)
                    throw ValidationError("split view index " + std::to_string(v) + " out of range");
                if (!seen.insert(v).second)
                    throw ValidationError("split lists overlap or repeat view " + std::to_string(v));
            }
        out.train = pattern.train;
        out.test = pattern.test;
        break;
    }
    }
    if (out.train.empty())
        throw ValidationError("view split leaves no training views");
    return out;
}

PhantomSpec fixture_a_phantom()
{
    PhantomSpec spec;
    spec.grid = GridSpec::centered_cube(64);
    auto add = [&](Primitive p) { spec.primitives.push_back(p); };

    Primitive shell;
    shell.shape = PrimitiveShape::Shell;
    shell.radius = 20.0;
    shell.inner_radius = 15.0;
    shell.value = 2.0;
    add(shell);

    Primitive core;
    core.shape = PrimitiveShape::Sphere;
    core.radius = 15.0;
    core.value = 1.0;
    add(core);

    // bright inclusions and a satellite particle break the rotational symmetry
    auto blob = [&](Eigen::Vector3d c, Eigen::Vector3d s, double v) {
        Primitive b;
        b.shape = PrimitiveShape::Blob;
        b.center = c;
        b.sigmas = s;
        b.value = v;
        add(b);
    };
    blob({8.0, -6.0, 5.0}, {2.5, 1.5, 2.0}, 2.0);
    blob({-9.0, 7.0, -4.0}, {1.5, 2.5, 1.5}, 1.5);
    blob({3.0, 10.0, -10.0}, {2.0, 2.0, 1.2}, 2.5);
    blob({-13.0, -11.0, 8.0}, {2.0, 2.0, 2.0}, 2.0);

    Primitive box;
    box.shape = PrimitiveShape::Box;
    box.center = {0.0, -4.0, 24.0};
    box.half_extents = {5.0, 4.0, 3.0};
    box.value = 1.5;
    add(box);
    return spec;
}

Fixture fixture_a(std::uint64_t rng_seed)
{
    Fixture f;
    f.phantom = fixture_a_phantom();
    DetectorGrid det{64, 64, 1.0};
    f.geometry = TiltGeometry(TiltGeometry::linspace_angles(-70.0, 70.0, 45), det, BeamModel{});
    f.noise.dose = 1e4;
    f.noise.rng_seed = rng_seed;
    f.split = SplitPattern::kept(3);
    return f;
}

} // namespace denza

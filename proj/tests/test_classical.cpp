#include <doctest.h>

#include <random>

#include "denza/classical.hpp"
#include "denza/error.hpp"
#include "denza/metrics.hpp"
#include "denza/synthdata.hpp"
#include "helpers.hpp"

using namespace denza;

namespace {

double inner(const std::vector<double>& a, const std::vector<double>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

Volume blob_volume(int n, double sigma)
{
    PhantomSpec spec;
    spec.grid = GridSpec::centered_cube(n);
    Primitive b;
    b.shape = PrimitiveShape::Blob;
    b.sigmas = Eigen::Vector3d::Constant(sigma);
    b.value = 1.0;
    spec.primitives.push_back(b);
    return build_phantom(spec);
}

double volume_psnr(const Volume& est, const Volume& gt)
{
    double mx = 0.0;
    for (double x : gt.data)
        mx = std::max(mx, x);
    return psnr(est, gt, mx);
}

Volume core_shell(int n)
{
    PhantomSpec spec;
    spec.grid = GridSpec::centered_cube(n);
    Primitive shell;
    shell.shape = PrimitiveShape::Shell;
    shell.radius = 0.3 * n;
    shell.inner_radius = 0.22 * n;
    shell.value = 2.0;
    Primitive core;
    core.radius = 0.22 * n;
    core.value = 1.0;
    Primitive blob;
    blob.shape = PrimitiveShape::Blob;
    blob.center = Eigen::Vector3d(0.1 * n, -0.1 * n, 0.05 * n);
    blob.sigmas = Eigen::Vector3d(1.5, 1.0, 1.2);
    blob.value = 2.0;
    spec.primitives = {shell, core, blob};
    return build_phantom(spec);
}

} // namespace

TEST_CASE("project_volume: uniform slab gives the path length")
{
    const GridSpec grid = GridSpec::centered_cube(16);
    const Volume vol(grid, 1.0);
    const TiltGeometry g({0.0}, DetectorGrid{16, 16, 1.0});
    const ProjectionImage img = project_volume(vol, g, 0);
    // interior pixels cross all 16 voxels; trilinear zero padding trims half a voxel at each face
    for (int v = 4; v < 12; ++v)
        for (int u = 4; u < 12; ++u)
            CHECK(std::abs(img.at(u, v) - 16.0) / 16.0 < 0.04);
    CHECK(testutil::sum(project_volume(Volume(grid), g, 0).data) == 0.0);
}

TEST_CASE("project_volume: bright voxel mass is preserved")
{
    const GridSpec grid = GridSpec::centered_cube(16);
    Volume vol(grid);
    vol.at(9, 6, 7) = 3.0;
    for (double a : {0.0, 30.0, -65.0}) {
        const TiltGeometry g({a}, DetectorGrid{24, 24, 1.0});
        const ProjectionImage img = project_volume(vol, g, 0);
        // point sampling the oblique footprint at pixel centers aliases by up to ~2%
        CHECK(std::abs(testutil::sum(img.data) - 3.0) / 3.0 < (a == 0.0 ? 0.02 : 0.03));
        if (a == 0.0) {
            // the column over voxel (9, 6): voxel centers sit on pixel centers with this grid
            CHECK(img.at(4 + 9, 4 + 6) == doctest::Approx(3.0).epsilon(1e-12));
            CHECK(img.at(4 + 8, 4 + 6) == 0.0);
        }
    }
}

TEST_CASE("backproject is the adjoint of project_all (parallel and cone)")
{
    const GridSpec grid = GridSpec::centered_cube(16);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    BeamModel cone;
    cone.kind = BeamKind::Cone;
    cone.source_distance = 40.0;
    cone.detector_distance = 8.0;
    for (const BeamModel& beam : {BeamModel{}, cone}) {
        const TiltGeometry g({-60.0, -13.0, 0.0, 22.0, 71.0}, DetectorGrid{16, 16, 1.0}, beam);
        Volume v(grid);
        for (double& x : v.data)
            x = d(rng);
        ProjectionStack p;
        for (std::size_t k = 0; k < g.num_views(); ++k)
            p.images.push_back(testutil::random_image(rng, 16, 16));
        const ProjectionStack av = project_all(v, g);
        double lhs = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k)
            lhs += inner(av[k].data, p[k].data);
        const double rhs = inner(v.data, backproject(p, g, grid).data);
        CHECK(std::abs(lhs - rhs) <= 1e-6 * std::abs(lhs));
    }
}

TEST_CASE("backproject: zero stack and single-pixel ridge")
{
    const GridSpec grid = GridSpec::centered_cube(16);
    const TiltGeometry g({0.0}, DetectorGrid{16, 16, 1.0});
    ProjectionStack p;
    p.images.push_back(ProjectionImage(16, 16));
    CHECK(testutil::sum(backproject(p, g, grid).data) == 0.0);
    p[0].at(5, 9) = 1.0;
    const Volume b = backproject(p, g, grid);
    // voxel column (5, 9, k): constant ridge apart from the entry/exit faces
    for (int k = 1; k < 15; ++k)
        CHECK(b.at(5, 9, k) == doctest::Approx(b.at(5, 9, 7)).epsilon(1e-12));
    CHECK(b.at(5, 9, 7) > 0.0);
    CHECK(b.at(6, 9, 7) == 0.0);
    CHECK(b.at(5, 10, 7) == 0.0);
}

TEST_CASE("FDK: blob phantom, many views beat few views; zero and linearity")
{
    const Volume gt = blob_volume(32, 3.0);
    const TiltGeometry g60(TiltGeometry::linspace_angles(-88.0, 88.0, 60), DetectorGrid{32, 32, 1.0});
    const ProjectionStack s60 = project_all(gt, g60);
    const Volume r60 = fdk_reconstruct(s60, g60, gt.grid, RampFilter::RamLak);
    const double p60 = volume_psnr(r60, gt);
    CHECK(p60 >= 20.0);

    std::vector<std::size_t> every4;
    for (std::size_t i = 0; i < 60; i += 4)
        every4.push_back(i);
    const TiltGeometry g15 = g60.subset(every4);
    const Volume r15 = fdk_reconstruct(s60.subset(every4), g15, gt.grid, RampFilter::RamLak);
    CHECK(volume_psnr(r15, gt) < p60);

    ProjectionStack z = s60;
    for (auto& im : z.images)
        std::fill(im.data.begin(), im.data.end(), 0.0);
    CHECK(testutil::sum(fdk_reconstruct(z, g60, gt.grid, RampFilter::Hann).data) == 0.0);

    ProjectionStack scaled = s60;
    for (auto& im : scaled.images)
        for (double& x : im.data)
            x *= 2.5;
    const Volume rs = fdk_reconstruct(scaled, g60, gt.grid, RampFilter::RamLak);
    double worst = 0.0;
    for (std::size_t i = 0; i < rs.data.size(); ++i)
        worst = std::max(worst, std::abs(rs.data[i] - 2.5 * r60.data[i]));
    CHECK(worst < 1e-9);
}

TEST_CASE("FDK: widening the tilt range improves the fixture reconstruction")
{
    const Volume gt = core_shell(32);
    auto run = [&](double range) {
        const TiltGeometry g(TiltGeometry::linspace_angles(-range, range, 45), DetectorGrid{32, 32, 1.0});
        return volume_psnr(fdk_reconstruct(project_all(gt, g), g, gt.grid, RampFilter::RamLak), gt);
    };
    CHECK(run(89.0) > run(70.0));
}

TEST_CASE("FDK cone path reconstructs a centered blob")
{
    const Volume gt = blob_volume(24, 2.5);
    BeamModel b;
    b.kind = BeamKind::Cone;
    b.source_distance = 200.0;
    const TiltGeometry g(TiltGeometry::linspace_angles(-88.0, 88.0, 60), DetectorGrid{24, 24, 1.0}, b);
    const Volume r = fdk_reconstruct(project_all(gt, g), g, gt.grid, RampFilter::RamLak);
    CHECK(volume_psnr(r, gt) >= 20.0);
}

TEST_CASE("FDK rejects a single view")
{
    const GridSpec grid = GridSpec::centered_cube(8);
    const TiltGeometry g({0.0}, DetectorGrid{8, 8, 1.0});
    ProjectionStack s;
    s.images.push_back(ProjectionImage(8, 8));
    CHECK_THROWS_AS(fdk_reconstruct(s, g, grid, RampFilter::RamLak), ValidationError);
}

TEST_CASE("SIRT: residual decreases, nonnegativity, zero stack, beats FDK at 15 views")
{
    const Volume gt = core_shell(32);
    const TiltGeometry g(TiltGeometry::linspace_angles(-70.0, 70.0, 15), DetectorGrid{32, 32, 1.0});
    const ProjectionStack s = project_all(gt, g);

    std::vector<double> res;
    SirtOptions o;
    o.iterations = 100;
    o.on_iteration = [&](int, double r) { res.push_back(r); };
    const Volume v = sirt_reconstruct(s, g, gt.grid, o);
    REQUIRE(res.size() == 100);
    for (int k = 1; k < 50; ++k)
        CHECK(res[k] < res[k - 1]);
    CHECK(*std::min_element(v.data.begin(), v.data.end()) >= 0.0);
    const Volume f = fdk_reconstruct(s, g, gt.grid, RampFilter::RamLak);
    CHECK(volume_psnr(v, gt) > volume_psnr(f, gt));

    ProjectionStack z = s;
    for (auto& im : z.images)
        std::fill(im.data.begin(), im.data.end(), 0.0);
    SirtOptions o3;
    o3.iterations = 3;
    CHECK(testutil::sum(sirt_reconstruct(z, g, gt.grid, o3).data) == 0.0);

    SirtOptions bad;
    bad.iterations = 0;
    CHECK_THROWS_AS(sirt_reconstruct(s, g, gt.grid, bad), ValidationError);
    bad.iterations = 1;
    bad.relaxation = 2.5;
    CHECK_THROWS_AS(sirt_reconstruct(s, g, gt.grid, bad), ValidationError);
}

TEST_CASE("seed_cloud: empty request, uniform volume octants, determinism")
{
    const Volume uni(GridSpec::centered_cube(16), 1.0);
    SeedOptions o;
    o.n_points = 0;
    CHECK(seed_cloud(uni, o).empty());

    o.n_points = 2000;
    o.threshold_percentile = 0.0;
    o.rng_seed = 5;
    const GaussianCloud c = seed_cloud(uni, o);
    REQUIRE(c.size() == 2000);
    int counts[8] = {};
    for (const auto& p : c.positions)
        ++counts[(p.x() > 0) + 2 * (p.y() > 0) + 4 * (p.z() > 0)];
    double chi2 = 0.0;
    for (int k : counts)
        chi2 += (k - 250.0) * (k - 250.0) / 250.0;
    CHECK(chi2 < 18.475); // 7 dof, p = 0.01

    const GaussianCloud again = seed_cloud(uni, o);
    CHECK(again.positions == c.positions);
    CHECK(again.denza_raw == c.denza_raw);
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(c.rotations[i] == Quat(1, 0, 0, 0));
        CHECK(c.log_scales[i] == c.log_scales[0]);
        CHECK(std::abs(activate_denza(c.denza_raw[i]) - 1.0) < 1e-12);
    }
}

TEST_CASE("seed_cloud: seeds concentrate in the blobs")
{
    PhantomSpec spec;
    spec.grid = GridSpec::centered_cube(32);
    Primitive a;
    a.shape = PrimitiveShape::Blob;
    a.center = Eigen::Vector3d(-7, 0, 2);
    a.sigmas = Eigen::Vector3d(3.0, 3.5, 3.0);
    a.value = 1.0;
    Primitive b = a;
    b.center = Eigen::Vector3d(8, 3, -3);
    b.sigmas = Eigen::Vector3d(2.5, 2.5, 3.5);
    b.value = 2.0;
    spec.primitives = {a, b};
    const Volume vol = build_phantom(spec);
    SeedOptions o;
    o.n_points = 500;
    // top 5% of a 32^3 grid lies inside both 2 sigma ellipsoids
    o.threshold_percentile = 95.0;
    o.rng_seed = 3;
    const GaussianCloud c = seed_cloud(vol, o);
    int inside = 0;
    for (const auto& p : c.positions) {
        bool in = false;
        for (const Primitive* q : {&a, &b})
            in = in || ((p - q->center).array() / q->sigmas.array()).matrix().squaredNorm() <= 4.0;
        inside += in;
    }
    CHECK(inside >= 450);
}

TEST_CASE("seed_cloud: errors")
{
    Volume vol(GridSpec::centered_cube(8));
    vol.at(1, 1, 1) = 1.0;
    SeedOptions o;
    o.n_points = 10;
    CHECK_THROWS_AS(seed_cloud(vol, o), SeedingError);
    o.threshold_percentile = 100.0;
    CHECK_THROWS_AS(seed_cloud(vol, o), ValidationError);
}

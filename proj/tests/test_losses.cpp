#include <doctest.h>

#include <complex>
#include <numbers>
#include <random>

#include "denza/error.hpp"
#include "denza/losses.hpp"
#include "helpers.hpp"

using namespace denza;

namespace {

// naive DFT amplitude oracle
double fourier_oracle(const ProjectionImage& a, const ProjectionImage& b, double lhf)
{
    const int nu = a.nu, nv = a.nv;
    double s = 0.0;
    for (int kv = 0; kv < nv; ++kv)
        for (int ku = 0; ku < nu; ++ku) {
            std::complex<double> fa = 0.0, fb = 0.0;
            for (int v = 0; v < nv; ++v)
                for (int u = 0; u < nu; ++u) {
                    const double ph = -2.0 * std::numbers::pi * (double(ku * u) / nu + double(kv * v) / nv);
                    const std::complex<double> e(std::cos(ph), std::sin(ph));
                    fa += a.at(u, v) * e;
                    fb += b.at(u, v) * e;
                }
            const double cu = (ku <= nu / 2 ? ku : ku - nu) / double(nu);
            const double cv = (kv <= nv / 2 ? kv : kv - nv) / double(nv);
            const double w = std::min(1.0, std::hypot(cu, cv) / std::sqrt(0.5));
            s += (1.0 + lhf * w) * std::abs(std::abs(fa) - std::abs(fb));
        }
    return s / (nu * nv);
}

template <class F>
void check_image_gradient(ProjectionImage render, const std::vector<double>& grad, F&& value, double rel, double h)
{
    REQUIRE(grad.size() == render.size());
    for (std::size_t i = 0; i < render.size(); ++i) {
        const double x0 = render.data[i];
        render.data[i] = x0 + h;
        const double fp = value(render);
        render.data[i] = x0 - h;
        const double fm = value(render);
        render.data[i] = x0;
        const double num = (fp - fm) / (2 * h);
        INFO("pixel " << i << " analytic " << grad[i] << " numeric " << num);
        CHECK(testutil::fd_close(grad[i], num, rel, 1e-7));
    }
}

ProjectionImage shifted(const ProjectionImage& a, int du, int dv)
{
    ProjectionImage out(a.nu, a.nv);
    for (int v = 0; v < a.nv; ++v)
        for (int u = 0; u < a.nu; ++u)
            out.at((u + du) % a.nu, (v + dv) % a.nv) = a.at(u, v);
    return out;
}

Volume random_volume(std::mt19937_64& rng, int nx, int ny, int nz)
{
    GridSpec g;
    g.nx = nx;
    g.ny = ny;
    g.nz = nz;
    Volume v(g);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (double& x : v.data)
        x = d(rng);
    return v;
}

} // namespace

TEST_CASE("pixel_l1 examples")
{
    std::mt19937_64 rng(1);
    const ProjectionImage a = testutil::random_image(rng, 4, 4);
    const ImageLoss same = pixel_l1(a, a);
    CHECK(same.value == 0.0);
    for (double g : same.gradient)
        CHECK(g == 0.0);

    ProjectionImage b = a;
    for (double& x : b.data)
        x += 1.0;
    const ImageLoss one = pixel_l1(b, a);
    CHECK(one.value == doctest::Approx(1.0).epsilon(1e-14));
    for (double g : one.gradient)
        CHECK(g == doctest::Approx(1.0 / 16).epsilon(1e-12));

    const ProjectionImage c = testutil::random_image(rng, 4, 4);
    double s = 0.0;
    for (int v = 0; v < 4; ++v)
        for (int u = 0; u < 4; ++u)
            s += std::abs(a.at(u, v) - c.at(u, v));
    CHECK(std::abs(pixel_l1(a, c).value - s / 16) < 1e-12);

    CHECK_THROWS_AS(pixel_l1(a, ProjectionImage(4, 5)), ValidationError);
}

TEST_CASE("pixel_l1 gradient matches finite differences")
{
    std::mt19937_64 rng(2);
    const ProjectionImage r = testutil::random_image(rng, 8, 8);
    const ProjectionImage m = testutil::random_image(rng, 8, 8);
    check_image_gradient(r, pixel_l1(r, m).gradient, [&](const ProjectionImage& x) { return pixel_l1(x, m).value; },
                         1e-4, 1e-6);
}

TEST_CASE("fourier_amplitude examples")
{
    std::mt19937_64 rng(3);
    const ProjectionImage a = testutil::random_image(rng, 8, 8);
    CHECK(fourier_amplitude(a, a, 1.0).value == 0.0);

    ProjectionImage imp(8, 6);
    imp.at(3, 2) = 1.0;
    const ProjectionImage zero(8, 6);
    CHECK(fourier_amplitude(imp, zero, 0.0).value == doctest::Approx(1.0).epsilon(1e-13));
    double mean_w = 0.0;
    for (int kv = 0; kv < 6; ++kv)
        for (int ku = 0; ku < 8; ++ku)
            mean_w += 1.0 + 0.7 * radial_frequency_weight(ku, kv, 8, 6);
    CHECK(fourier_amplitude(imp, zero, 0.7).value == doctest::Approx(mean_w / 48).epsilon(1e-13));

    CHECK(radial_frequency_weight(0, 0, 8, 8) == 0.0);
    CHECK(radial_frequency_weight(4, 4, 8, 8) == doctest::Approx(1.0));

    const ProjectionImage b = testutil::random_image(rng, 8, 8);
    for (double lhf : {0.0, 1.0, 2.5})
        CHECK(std::abs(fourier_amplitude(a, b, lhf).value - fourier_oracle(a, b, lhf)) < 1e-10);

    CHECK_THROWS_AS(fourier_amplitude(ProjectionImage(1, 8), ProjectionImage(1, 8), 1.0), ValidationError);
    CHECK_THROWS_AS(fourier_amplitude(a, ProjectionImage(8, 4), 1.0), ValidationError);
}

TEST_CASE("fourier_amplitude gradient matches finite differences")
{
    std::mt19937_64 rng(4);
    const ProjectionImage r = testutil::random_image(rng, 8, 8);
    const ProjectionImage m = testutil::random_image(rng, 8, 8);
    for (double lhf : {0.0, 1.0}) {
        check_image_gradient(r, fourier_amplitude(r, m, lhf).gradient,
                             [&](const ProjectionImage& x) { return fourier_amplitude(x, m, lhf).value; }, 1e-5, 1e-6);
    }
}

TEST_CASE("fourier_amplitude: translation invariance and scaling")
{
    std::mt19937_64 rng(5);
    const ProjectionImage a = testutil::random_image(rng, 8, 8);
    const ProjectionImage b = testutil::random_image(rng, 8, 8);
    const double base = fourier_amplitude(a, b, 1.0).value;
    CHECK(std::abs(fourier_amplitude(shifted(a, 3, 5), shifted(b, 3, 5), 1.0).value - base) < 1e-10);

    ProjectionImage a2 = a, b2 = b;
    for (double& x : a2.data)
        x *= 3.0;
    for (double& x : b2.data)
        x *= 3.0;
    CHECK(fourier_amplitude(a2, b2, 1.0).value == doctest::Approx(3.0 * base).epsilon(1e-12));
    CHECK(pixel_l1(a2, b2).value == doctest::Approx(3.0 * pixel_l1(a, b).value).epsilon(1e-12));
}

TEST_CASE("ssim_loss examples")
{
    std::mt19937_64 rng(6);
    const ProjectionImage m = testutil::random_image(rng, 16, 16, 0.1, 1.0);
    CHECK(std::abs(ssim_loss(m, m, 1.0).value) < 1e-12);

    // anticorrelated pair with locally zero-mean content: luminance stays near 1, structure flips sign
    ProjectionImage chk(16, 16), neg(16, 16);
    for (int v = 0; v < 16; ++v)
        for (int u = 0; u < 16; ++u) {
            chk.at(u, v) = ((u + v) % 2 ? 0.5 : -0.5);
            neg.at(u, v) = -chk.at(u, v);
        }
    const SsimResult anti = ssim_with_gradient(neg.data, chk.data, 16, 16, 1.0, false);
    CHECK(anti.mean <= 0.0);
    CHECK(ssim_loss(neg, chk, 1.0).value >= 1.0);

    ProjectionImage m2 = m, r = testutil::random_image(rng, 16, 16, 0.0, 1.0), r2 = r;
    for (double& x : m2.data)
        x *= 4.0;
    for (double& x : r2.data)
        x *= 4.0;
    CHECK(ssim_loss(r2, m2, 4.0).value == doctest::Approx(ssim_loss(r, m, 1.0).value).epsilon(1e-12));

    CHECK_THROWS_AS(ssim_loss(m, m, 0.0), ValidationError);
    CHECK_THROWS_AS(ssim_loss(ProjectionImage(10, 16), ProjectionImage(10, 16), 1.0), ValidationError);
}

TEST_CASE("ssim_loss gradient matches finite differences")
{
    std::mt19937_64 rng(7);
    const ProjectionImage r = testutil::random_image(rng, 16, 16, 0.0, 1.0);
    const ProjectionImage m = testutil::random_image(rng, 16, 16, 0.0, 1.0);
    check_image_gradient(r, ssim_loss(r, m, 1.0).gradient,
                         [&](const ProjectionImage& x) { return ssim_loss(x, m, 1.0).value; }, 1e-4, 1e-5);
}

TEST_CASE("tv3d examples")
{
    for (TvMode mode : {TvMode::Axial3, TvMode::Neighbor8}) {
        GridSpec g;
        g.nx = g.ny = g.nz = 5;
        const VolumeLoss c = tv3d(Volume(g, 2.5), mode);
        CHECK(c.value == 0.0);
        for (double x : c.gradient)
            CHECK(x == 0.0);
    }
    GridSpec g2;
    g2.nx = 2;
    Volume v(g2);
    v.data = {0.0, 1.0};
    CHECK(tv3d(v, TvMode::Axial3).value == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(tv3d(Volume(GridSpec{}), TvMode::Axial3), ValidationError);

    // hand oracle on a 3x3x1 slice with Neighbor8
    GridSpec g3;
    g3.nx = g3.ny = 3;
    Volume s(g3);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (double& x : s.data)
        x = d(rng);
    double ref = 0.0;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) {
            if (i < 2)
                ref += std::abs(s.at(i + 1, j, 0) - s.at(i, j, 0));
            if (j < 2)
                ref += std::abs(s.at(i, j + 1, 0) - s.at(i, j, 0));
            if (i < 2 && j < 2)
                ref += std::abs(s.at(i + 1, j + 1, 0) - s.at(i, j, 0)) / std::sqrt(2.0);
            if (i < 2 && j > 0)
                ref += std::abs(s.at(i + 1, j - 1, 0) - s.at(i, j, 0)) / std::sqrt(2.0);
        }
    CHECK(std::abs(tv3d(s, TvMode::Neighbor8).value - ref / 9) < 1e-14);
}

TEST_CASE("tv3d gradient matches finite differences")
{
    std::mt19937_64 rng(9);
    for (TvMode mode : {TvMode::Axial3, TvMode::Neighbor8}) {
        Volume v = random_volume(rng, 6, 6, 6);
        const VolumeLoss tv = tv3d(v, mode);
        const double h = 1e-7;
        for (std::size_t i = 0; i < v.data.size(); ++i) {
            const double x0 = v.data[i];
            v.data[i] = x0 + h;
            const double fp = tv3d(v, mode).value;
            v.data[i] = x0 - h;
            const double fm = tv3d(v, mode).value;
            v.data[i] = x0;
            CHECK(testutil::fd_close(tv.gradient[i], (fp - fm) / (2 * h), 1e-4, 1e-7));
        }
    }
}

TEST_CASE("total_loss: recomposition, single-term and zero cases")
{
    std::mt19937_64 rng(10);
    std::vector<ProjectionImage> r, m;
    for (int k = 0; k < 3; ++k) {
        r.push_back(testutil::random_image(rng, 16, 16, 0.0, 1.0));
        m.push_back(testutil::random_image(rng, 16, 16, 0.0, 1.0));
    }
    const Volume vol = random_volume(rng, 5, 4, 3);
    LossWeights w;
    w.lambda_pixel = 0.7;
    w.lambda_freq = 0.3;
    w.lambda_ssim = 0.4;
    w.lambda_3dtv = 0.05;
    w.lambda_hf = 1.5;
    TotalLossOptions o;
    o.ssim_data_range = 1.0;
    const LossReport rep = total_loss(r, m, &vol, w, o);

    double p = 0, f = 0, s = 0;
    for (int k = 0; k < 3; ++k) {
        p += pixel_l1(r[k], m[k]).value / 3;
        f += fourier_amplitude(r[k], m[k], 1.5).value / 3;
        s += ssim_loss(r[k], m[k], 1.0).value / 3;
    }
    const double t = tv3d(vol, TvMode::Axial3).value;
    CHECK(std::abs(rep.terms.pixel - p) < 1e-12);
    CHECK(std::abs(rep.terms.freq - f) < 1e-12);
    CHECK(std::abs(rep.terms.ssim - s) < 1e-12);
    CHECK(std::abs(rep.terms.tv3d - t) < 1e-12);
    CHECK(std::abs(rep.terms.total - (0.7 * p + 0.3 * f + 0.4 * s + 0.05 * t)) < 1e-12);
    CHECK(std::abs(rep.terms.total - recompose_total(rep.terms, w)) < 1e-12);
    CHECK(rep.terms.pixel >= 0);
    CHECK(rep.terms.freq >= 0);
    CHECK(rep.terms.ssim >= 0);

    // gradient of the per-view aggregate
    const std::vector<double> gk = pixel_l1(r[1], m[1]).gradient;
    const std::vector<double> fk = fourier_amplitude(r[1], m[1], 1.5).gradient;
    const std::vector<double> sk = ssim_loss(r[1], m[1], 1.0).gradient;
    for (std::size_t i = 0; i < gk.size(); ++i)
        CHECK(std::abs(rep.d_renders[1].data[i] - (0.7 * gk[i] + 0.3 * fk[i] + 0.4 * sk[i]) / 3) < 1e-14);

    LossWeights only;
    only.lambda_pixel = 1;
    only.lambda_freq = only.lambda_ssim = only.lambda_3dtv = 0;
    CHECK(total_loss(r, m, &vol, only, o).terms.total == doctest::Approx(p).epsilon(1e-14));

    const Volume flat(vol.grid, 0.4);
    CHECK(total_loss(m, m, &flat, w, o).terms.total == doctest::Approx(0.0).epsilon(1e-14));

    CHECK_THROWS_AS(total_loss(r, {m[0]}, nullptr, w, o), ValidationError);
    LossWeights bad;
    bad.lambda_freq = -1;
    CHECK_THROWS_AS(total_loss(r, m, nullptr, bad, o), ValidationError);
    LossWeights none;
    none.lambda_pixel = none.lambda_freq = none.lambda_ssim = 0;
    CHECK_THROWS_AS(total_loss(r, m, nullptr, none, o), ValidationError);
}

#include "denza/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "denza/error.hpp"
#include "denza/fft.hpp"

namespace denza {

namespace {

double huber_slope(double x)
{
    return std::clamp(x / kHuberDelta, -1.0, 1.0);
}

void require_same_shape(const ProjectionImage& a, const ProjectionImage& b)
{
    if (!a.same_shape(b))
        throw ValidationError("image dimension mismatch: " + std::to_string(a.nu) + "x" + std::to_string(a.nv) +
                              " vs " + std::to_string(b.nu) + "x" + std::to_string(b.nv));
}

const std::vector<double>& ssim_kernel()
{
    static const std::vector<double> k = [] {
        std::vector<double> g(kSsimWindow);
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double x = i - kSsimWindow / 2;
            g[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
            sum += g[i];
        }
        for (double& x : g)
            x /= sum;
        return g;
    }();
    return k;
}

// Separable valid-mode correlation with the SSIM window.
std::vector<double> window_filter(const std::vector<double>& img, int nu, int nv)
{
    const auto& g = ssim_kernel();
    const int mu = nu - kSsimWindow + 1;
    const int mv = nv - kSsimWindow + 1;
    std::vector<double> tmp(std::size_t(mu) * nv, 0.0);
    for (int v = 0; v < nv; ++v)
        for (int u = 0; u < mu; ++u) {
            double acc = 0.0;
            for (int i = 0; i < kSsimWindow; ++i)
                acc += g[i] * img[std::size_t(v) * nu + u + i];
            tmp[std::size_t(v) * mu + u] = acc;
        }
    std::vector<double> out(std::size_t(mu) * mv, 0.0);
    for (int v = 0; v < mv; ++v)
        for (int u = 0; u < mu; ++u) {
            double acc = 0.0;
            for (int j = 0; j < kSsimWindow; ++j)
                acc += g[j] * tmp[std::size_t(v + j) * mu + u];
            out[std::size_t(v) * mu + u] = acc;
        }
    return out;
}

// Adjoint of window_filter.
std::vector<double> window_filter_adjoint(const std::vector<double>& map, int nu, int nv)
{
    const auto& g = ssim_kernel();
    const int mu = nu - kSsimWindow + 1;
    const int mv = nv - kSsimWindow + 1;
    std::vector<double> tmp(std::size_t(mu) * nv, 0.0);
    for (int v = 0; v < mv; ++v)
        for (int u = 0; u < mu; ++u) {
            const double m = map[std::size_t(v) * mu + u];
            for (int j = 0; j < kSsimWindow; ++j)
                tmp[std::size_t(v + j) * mu + u] += g[j] * m;
        }
    std::vector<double> out(std::size_t(nu) * nv, 0.0);
    for (int v = 0; v < nv; ++v)
        for (int u = 0; u < mu; ++u) {
            const double t = tmp[std::size_t(v) * mu + u];
            for (int i = 0; i < kSsimWindow; ++i)
                out[std::size_t(v) * nu + u + i] += g[i] * t;
        }
    return out;
}

} // namespace

void LossWeights::validate() const
{
    for (double w : {lambda_pixel, lambda_freq, lambda_ssim, lambda_3dtv, lambda_hf})
        if (!(w >= 0.0) || !std::isfinite(w))
            throw ValidationError("loss weights must be finite and non-negative");
    if (!(lambda_pixel > 0.0 || lambda_freq > 0.0 || lambda_ssim > 0.0))
        throw ValidationError("at least one data-term weight must be positive");
}

ImageLoss pixel_l1(const ProjectionImage& render, const ProjectionImage& meas)
{
    require_same_shape(render, meas);
    ImageLoss out;
    out.gradient.resize(render.size());
    const double inv = 1.0 / double(render.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < render.size(); ++i) {
        const double d = render.data[i] - meas.data[i];
        sum += std::abs(d);
        out.gradient[i] = huber_slope(d) * inv;
    }
    out.value = sum * inv;
    return out;
}

double radial_frequency_weight(int ku, int kv, int nu, int nv)
{
    const double fu = double(ku <= nu / 2 ? ku : ku - nu) / nu;
    const double fv = double(kv <= nv / 2 ? kv : kv - nv) / nv;
    return std::min(1.0, std::sqrt(fu * fu + fv * fv) / std::sqrt(0.5));
}

ImageLoss fourier_amplitude(const ProjectionImage& render, const ProjectionImage& meas, double lambda_hf)
{
    require_same_shape(render, meas);
    if (render.nu < 2 || render.nv < 2)
        throw ValidationError("Fourier amplitude loss needs at least 2x2 images");
    const int nu = render.nu, nv = render.nv;
    const std::size_t n = render.size();

    std::vector<fft::cplx> fr(render.data.begin(), render.data.end());
    std::vector<fft::cplx> fm(meas.data.begin(), meas.data.end());
    fft::transform_2d(fr, nv, nu, false);
    fft::transform_2d(fm, nv, nu, false);

    const double inv = 1.0 / double(n);
    double sum = 0.0;
    std::vector<fft::cplx> g(n);
    for (int kv = 0; kv < nv; ++kv)
        for (int ku = 0; ku < nu; ++ku) {
            const std::size_t k = std::size_t(kv) * nu + ku;
            const double wk = 1.0 + lambda_hf * radial_frequency_weight(ku, kv, nu, nv);
            const double ar = std::abs(fr[k]);
            const double d = ar - std::abs(fm[k]);
            sum += wk * std::abs(d);
            g[k] = ar < 1e-12 ? fft::cplx(0.0) : (wk * inv * huber_slope(d) / ar) * fr[k];
        }

    // dL/dx = Re(sum_k G_k e^{+i theta}) for real input x.
    fft::transform_2d(g, nv, nu, true);
    ImageLoss out;
    out.value = sum * inv;
    out.gradient.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.gradient[i] = g[i].real();
    return out;
}

SsimResult ssim_with_gradient(const std::vector<double>& a, const std::vector<double>& b, int nu, int nv,
                              double data_range, bool want_gradient)
{
    if (!(data_range > 0.0))
        throw ValidationError("SSIM data_range must be positive");
    if (nu < kSsimWindow || nv < kSsimWindow)
        throw ValidationError("SSIM needs images of at least 11x11 pixels");
    if (a.size() != std::size_t(nu) * nv || b.size() != a.size())
        throw ValidationError("SSIM image dimension mismatch");

    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);

    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto mu_a = window_filter(a, nu, nv);
    const auto mu_b = window_filter(b, nu, nv);
    const auto e_aa = window_filter(aa, nu, nv);
    const auto e_bb = window_filter(bb, nu, nv);
    const auto e_ab = window_filter(ab, nu, nv);

    const std::size_t m = mu_a.size();
    std::vector<double> ga, gb, gc;
    if (want_gradient) {
        ga.resize(m);
        gb.resize(m);
        gc.resize(m);
    }
    double sum = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
        const double ma = mu_a[p], mb = mu_b[p];
        const double va = e_aa[p] - ma * ma;
        const double vb = e_bb[p] - mb * mb;
        const double cov = e_ab[p] - ma * mb;
        const double a1 = 2.0 * ma * mb + c1;
        const double a2 = 2.0 * cov + c2;
        const double b1 = ma * ma + mb * mb + c1;
        const double b2 = va + vb + c2;
        const double s = a1 * a2 / (b1 * b2);
        sum += s;
        if (want_gradient) {
            const double ds_dmu = 2.0 * mb * a2 / (b1 * b2) - s * 2.0 * ma / b1;
            const double ds_dvar = -s / b2;
            const double ds_dcov = 2.0 * a1 / (b1 * b2);
            ga[p] = ds_dmu - 2.0 * ds_dvar * ma - ds_dcov * mb;
            gb[p] = 2.0 * ds_dvar;
            gc[p] = ds_dcov;
        }
    }
    SsimResult out;
    out.mean = sum / double(m);
    if (want_gradient) {
        const double inv = 1.0 / double(m);
        const auto ta = window_filter_adjoint(ga, nu, nv);
        const auto tb = window_filter_adjoint(gb, nu, nv);
        const auto tc = window_filter_adjoint(gc, nu, nv);
        out.gradient.resize(a.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            out.gradient[i] = inv * (ta[i] + a[i] * tb[i] + b[i] * tc[i]);
    }
    return out;
}

ImageLoss ssim_loss(const ProjectionImage& render, const ProjectionImage& meas, double data_range)
{
    require_same_shape(render, meas);
    SsimResult s = ssim_with_gradient(render.data, meas.data, render.nu, render.nv, data_range, true);
    ImageLoss out;
    out.value = 1.0 - s.mean;
    out.gradient = std::move(s.gradient);
    for (double& g : out.gradient)
        g = -g;
    return out;
}

VolumeLoss tv3d(const Volume& vol, TvMode mode)
{
    const GridSpec& g = vol.grid;
    if (g.nx < 1 || g.ny < 1 || g.nz < 1 || vol.data.size() != g.voxel_count() || g.voxel_count() < 2)
        throw ValidationError("total variation needs a volume with at least two voxels");

    VolumeLoss out;
    out.gradient.assign(vol.data.size(), 0.0);
    double sum = 0.0;
    const double diag_w = 1.0 / std::numbers::sqrt2;

    auto term = [&](std::size_t a, std::size_t b, double w) {
        const double d = vol.data[b] - vol.data[a];
        sum += w * std::abs(d);
        const double s = w * huber_slope(d);
        out.gradient[b] += s;
        out.gradient[a] -= s;
    };

    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const std::size_t c = vol.index(i, j, k);
                if (i + 1 < g.nx)
                    term(c, vol.index(i + 1, j, k), 1.0);
                if (j + 1 < g.ny)
                    term(c, vol.index(i, j + 1, k), 1.0);
                if (k + 1 < g.nz)
                    term(c, vol.index(i, j, k + 1), 1.0);
                if (mode == TvMode::Neighbor8 && i + 1 < g.nx) {
                    if (j + 1 < g.ny)
                        term(c, vol.index(i + 1, j + 1, k), diag_w);
                    if (j > 0)
                        term(c, vol.index(i + 1, j - 1, k), diag_w);
                }
            }
    const double inv = 1.0 / double(vol.data.size());
    out.value = sum * inv;
    for (double& x : out.gradient)
        x *= inv;
    return out;
}

double recompose_total(const LossTerms& t, const LossWeights& w)
{
    return w.lambda_pixel * t.pixel + w.lambda_freq * t.freq + w.lambda_ssim * t.ssim + w.lambda_3dtv * t.tv3d;
}

LossReport total_loss(const std::vector<ProjectionImage>& renders, const std::vector<ProjectionImage>& meas,
                      const Volume* volume, const LossWeights& weights, const TotalLossOptions& opts)
{
    weights.validate();
    if (renders.size() != meas.size() || renders.empty())
        throw ValidationError("render and measurement view counts differ or are empty");

    const std::size_t views = renders.size();
    const double inv_views = 1.0 / double(views);
    LossReport rep;
    rep.d_renders.resize(views);
    std::vector<double> pix(views), freq(views), ssim(views);

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t vi = 0; vi < std::ptrdiff_t(views); ++vi) {
        const std::size_t v = std::size_t(vi);
        const ImageLoss lp = pixel_l1(renders[v], meas[v]);
        const ImageLoss lf = fourier_amplitude(renders[v], meas[v], weights.lambda_hf);
        pix[v] = lp.value;
        freq[v] = lf.value;
        ProjectionImage grad(renders[v].nu, renders[v].nv);
        grad.view = renders[v].view;
        grad.angle_deg = renders[v].angle_deg;
        for (std::size_t i = 0; i < grad.size(); ++i)
            grad.data[i] = inv_views * (weights.lambda_pixel * lp.gradient[i] + weights.lambda_freq * lf.gradient[i]);
        if (weights.lambda_ssim > 0.0) {
            const ImageLoss ls = ssim_loss(renders[v], meas[v], opts.ssim_data_range);
            ssim[v] = ls.value;
            for (std::size_t i = 0; i < grad.size(); ++i)
                grad.data[i] += inv_views * weights.lambda_ssim * ls.gradient[i];
        } else if (renders[v].nu >= kSsimWindow && renders[v].nv >= kSsimWindow) {
            ssim[v] = 1.0 - ssim_with_gradient(renders[v].data, meas[v].data, renders[v].nu, renders[v].nv,
                                               opts.ssim_data_range, false)
                                .mean;
        }
        rep.d_renders[v] = std::move(grad);
    }
    // fixed view order
    for (std::size_t v = 0; v < views; ++v) {
        rep.terms.pixel += pix[v];
        rep.terms.freq += freq[v];
        rep.terms.ssim += ssim[v];
    }
    rep.terms.pixel *= inv_views;
    rep.terms.freq *= inv_views;
    rep.terms.ssim *= inv_views;

    if (volume) {
        const VolumeLoss tv = tv3d(*volume, opts.tv_mode);
        rep.terms.tv3d = tv.value;
        rep.d_volume = Volume(volume->grid);
        for (std::size_t i = 0; i < tv.gradient.size(); ++i)
            rep.d_volume.data[i] = weights.lambda_3dtv * tv.gradient[i];
    }
    rep.terms.total = recompose_total(rep.terms, weights);
    return rep;
}

} // namespace denza

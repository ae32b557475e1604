#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "denza/gaussians.hpp"
#include "denza/geometry.hpp"
#include "denza/projection.hpp"

namespace testutil {

// Adaptive Simpson on [a, b].
inline double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                          double fb, double whole, double tol, int depth)
{
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-13)
{
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50);
}

/// Line integral of exp(-x^T C^-1 x / 2) along origin + t dir, t over the whole line.
inline double gaussian_line_integral(const Eigen::Matrix3d& cov, const Eigen::Vector3d& origin,
                                     const Eigen::Vector3d& dir)
{
    const Eigen::Matrix3d prec = cov.inverse();
    const Eigen::Vector3d n = dir.normalized();
    const double reach = 14.0 * std::sqrt(cov.eigenvalues().real().maxCoeff());
    const double t0 = -origin.dot(n);
    auto f = [&](double t) {
        const Eigen::Vector3d x = origin + t * n;
        return std::exp(-0.5 * x.dot(prec * x));
    };
    // split at the closest approach so the peak is a node
    return integrate(f, t0 - reach, t0, 1e-14) + integrate(f, t0, t0 + reach, 1e-14);
}

inline Eigen::Matrix3d random_spd(std::mt19937_64& rng, double lo = 0.3, double hi = 3.0)
{
    std::uniform_real_distribution<double> s(lo, hi);
    std::normal_distribution<double> g;
    Eigen::Vector4d q(g(rng), g(rng), g(rng), g(rng));
    const Eigen::Matrix3d r = denza::rotation_from_quaternion(q);
    Eigen::Vector3d var(s(rng), s(rng), s(rng));
    var = var.array().square();
    return r * var.asDiagonal() * r.transpose();
}

inline denza::GaussianCloud random_cloud(std::mt19937_64& rng, std::size_t n, double spread, double smin,
                                         double smax)
{
    std::uniform_real_distribution<double> pos(-spread, spread);
    std::uniform_real_distribution<double> sc(std::log(smin), std::log(smax));
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> raw(-0.5, 1.5);
    denza::GaussianCloud c;
    for (std::size_t i = 0; i < n; ++i)
        c.push_back({pos(rng), pos(rng), pos(rng)}, {sc(rng), sc(rng), sc(rng)},
                    denza::normalized_quaternion({g(rng), g(rng), g(rng), g(rng)}), raw(rng));
    return c;
}

inline double sum(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v)
        s += x;
    return s;
}

/// |analytic - numeric| <= abs_tol or relative error <= rel_tol.
inline bool fd_close(double analytic, double numeric, double rel_tol = 1e-4, double abs_tol = 1e-7)
{
    const double diff = std::abs(analytic - numeric);
    return diff <= abs_tol || diff <= rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

/// Iterates over every scalar parameter of a cloud: (group, index, component, reference).
template <typename Fn>
void for_each_param(denza::GaussianCloud& c, Fn&& fn)
{
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (int k = 0; k < 3; ++k)
            fn("position", i, k, c.positions[i][k]);
        for (int k = 0; k < 3; ++k)
            fn("log_scale", i, k, c.log_scales[i][k]);
        for (int k = 0; k < 4; ++k)
            fn("rotation", i, k, c.rotations[i][k]);
        fn("denza", i, 0, c.denza_raw[i]);
    }
}

inline double grad_of(const denza::CloudGradients& g, const char* group, std::size_t i, int k)
{
    const std::string s(group);
    if (s == "position")
        return g.d_positions[i][k];
    if (s == "log_scale")
        return g.d_log_scales[i][k];
    if (s == "rotation")
        return g.d_rotations[i][k];
    return g.d_denza_raw[i];
}

inline denza::ProjectionImage random_image(std::mt19937_64& rng, int nu, int nv, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> d(lo, hi);
    denza::ProjectionImage img(nu, nv);
    for (double& x : img.data)
        x = d(rng);
    return img;
}

} // namespace testutil

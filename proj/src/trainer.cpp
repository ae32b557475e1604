#include "denza/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "denza/voxelizer.hpp"

namespace denza {

void TrainConfig::validate() const
{
    if (iterations < 0)
        throw ValidationError("iterations must be >= 0");
    if (!(lr_position > 0.0 && lr_log_scale > 0.0 && lr_rotation > 0.0 && lr_denza > 0.0))
        throw ValidationError("learning rates must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0))
        throw ValidationError("adam betas must lie in [0, 1) and epsilon must be positive");
    if (prune_interval < 1 || densify_interval < 1 || tv_stride < 1)
        throw ValidationError("prune_interval, densify_interval and tv_stride must be >= 1");
    if (!(densify_grad_percentile >= 0.0 && densify_grad_percentile <= 100.0))
        throw ValidationError("densify_grad_percentile must lie in [0, 100]");
    if (!(densify_cap_factor >= 1.0))
        throw ValidationError("densify_cap_factor must be >= 1");
    if (!(min_scale > 0.0 && max_scale_fraction > 0.0))
        throw ValidationError("scale bounds must be positive");
    if (views_per_step < 0)
        throw ValidationError("views_per_step must be >= 0");
    tv_grid.validate();
    if (!(min_scale < max_scale_fraction * scene_extent()))
        throw ValidationError("min_scale must be below max_scale_fraction * scene extent");
    weights.validate();
}

int TrainConfig::densify_until() const
{
    return int(std::floor(densify_until_fraction * iterations));
}

TrainState::TrainState(GaussianCloud init)
    : cloud(std::move(init)), m(cloud.size()), v(cloud.size()), grad_accum(cloud.size(), 0.0),
      grad_count(cloud.size(), 0), clamp_streak(cloud.size(), 0), seed_count(cloud.size())
{
}

void TrainState::check_shapes() const
{
    const std::size_t n = cloud.size();
    if (m.size() != n || v.size() != n || grad_accum.size() != n || grad_count.size() != n ||
        clamp_streak.size() != n)
        throw ValidationError("optimizer state does not match the cloud size");
}

namespace {

template <typename T>
void adam_update(T& p, T& m, T& v, const T& g, double lr, double b1, double b2, double bc1, double bc2, double eps)
{
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    p -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
}

template <int N>
void adam_update(Eigen::Matrix<double, N, 1>& p, Eigen::Matrix<double, N, 1>& m, Eigen::Matrix<double, N, 1>& v,
                 const Eigen::Matrix<double, N, 1>& g, double lr, double b1, double b2, double bc1, double bc2,
                 double eps)
{
    for (int k = 0; k < N; ++k)
        adam_update(p[k], m[k], v[k], g[k], lr, b1, b2, bc1, bc2, eps);
}

double percentile(std::vector<double> xs, double pct)
{
    if (xs.empty())
        return 0.0;
    std::sort(xs.begin(), xs.end());
    const double pos = pct / 100.0 * double(xs.size() - 1);
    const std::size_t lo = std::size_t(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (pos - double(lo)) * (xs[hi] - xs[lo]);
}

void erase_rows(TrainState& s, const std::vector<bool>& keep)
{
    auto squeeze = [&](auto& vec) {
        std::size_t w = 0;
        for (std::size_t i = 0; i < vec.size(); ++i)
            if (keep[i])
                vec[w++] = vec[i];
        vec.resize(w);
    };
    s.cloud.compact(keep);
    squeeze(s.m.d_positions);
    squeeze(s.m.d_log_scales);
    squeeze(s.m.d_rotations);
    squeeze(s.m.d_denza_raw);
    squeeze(s.v.d_positions);
    squeeze(s.v.d_log_scales);
    squeeze(s.v.d_rotations);
    squeeze(s.v.d_denza_raw);
    squeeze(s.grad_accum);
    squeeze(s.grad_count);
    squeeze(s.clamp_streak);
}

void append_zero_moments(CloudGradients& g)
{
    g.d_positions.push_back(Vec3::Zero());
    g.d_log_scales.push_back(Vec3::Zero());
    g.d_rotations.push_back(Quat::Zero());
    g.d_denza_raw.push_back(0.0);
}

void zero_moments(CloudGradients& g, std::size_t i)
{
    g.d_positions[i].setZero();
    g.d_log_scales[i].setZero();
    g.d_rotations[i].setZero();
    g.d_denza_raw[i] = 0.0;
}

} // namespace

void adam_step(TrainState& s, const CloudGradients& g, const TrainConfig& cfg)
{
    s.check_shapes();
    if (g.size() != s.cloud.size())
        throw ValidationError("gradient count does not match the cloud");
    ++s.adam_steps;
    const double b1 = cfg.beta1, b2 = cfg.beta2, eps = cfg.epsilon;
    const double bc1 = 1.0 - std::pow(b1, double(s.adam_steps));
    const double bc2 = 1.0 - std::pow(b2, double(s.adam_steps));
    const double lr_pos = cfg.lr_position * cfg.scene_extent();
    GaussianCloud& c = s.cloud;
    for (std::size_t i = 0; i < c.size(); ++i) {
        adam_update<3>(c.positions[i], s.m.d_positions[i], s.v.d_positions[i], g.d_positions[i], lr_pos, b1, b2,
                       bc1, bc2, eps);
        adam_update<3>(c.log_scales[i], s.m.d_log_scales[i], s.v.d_log_scales[i], g.d_log_scales[i],
                       cfg.lr_log_scale, b1, b2, bc1, bc2, eps);
        adam_update<4>(c.rotations[i], s.m.d_rotations[i], s.v.d_rotations[i], g.d_rotations[i], cfg.lr_rotation,
                       b1, b2, bc1, bc2, eps);
        adam_update(c.denza_raw[i], s.m.d_denza_raw[i], s.v.d_denza_raw[i], g.d_denza_raw[i], cfg.lr_denza, b1, b2,
                    bc1, bc2, eps);
    }
}

void project_constraints(TrainState& s, const TrainConfig& cfg)
{
    const double lo = std::log(cfg.min_scale);
    const double hi = std::log(cfg.max_scale_fraction * cfg.scene_extent());
    for (std::size_t i = 0; i < s.cloud.size(); ++i) {
        s.cloud.rotations[i] = normalized_quaternion(s.cloud.rotations[i]);
        for (int a = 0; a < 3; ++a)
            s.cloud.log_scales[i][a] = std::clamp(s.cloud.log_scales[i][a], lo, hi);
    }
}

std::size_t prune(TrainState& s, const TrainConfig& cfg)
{
    s.check_shapes();
    const double lo = std::log(cfg.min_scale);
    const double hi = std::log(cfg.max_scale_fraction * cfg.scene_extent());
    constexpr double tol = 1e-12;
    std::vector<bool> keep(s.cloud.size(), true);
    std::size_t removed = 0;
    for (std::size_t i = 0; i < s.cloud.size(); ++i) {
        bool at_bound = false;
        for (int a = 0; a < 3; ++a) {
            const double ls = s.cloud.log_scales[i][a];
            at_bound = at_bound || ls <= lo + tol || ls >= hi - tol;
        }
        s.clamp_streak[i] = at_bound ? s.clamp_streak[i] + 1 : 0;
        if (activate_denza(s.cloud.denza_raw[i]) < cfg.prune_denza_floor || s.clamp_streak[i] > 2) {
            keep[i] = false;
            ++removed;
        }
    }
    if (removed == s.cloud.size())
        throw ValidationError("pruning would remove every Gaussian");
    if (removed > 0)
        erase_rows(s, keep);
    return removed;
}

std::size_t densify(TrainState& s, const TrainConfig& cfg)
{
    s.check_shapes();
    const std::size_t n = s.cloud.size();
    std::vector<double> mean_grad(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (s.grad_count[i] > 0)
            mean_grad[i] = s.grad_accum[i] / s.grad_count[i];
    const double threshold = percentile(mean_grad, cfg.densify_grad_percentile);

    std::vector<std::size_t> picks;
    for (std::size_t i = 0; i < n; ++i)
        if (mean_grad[i] > threshold && mean_grad[i] > 0.0)
            picks.push_back(i);
    std::stable_sort(picks.begin(), picks.end(),
                     [&](std::size_t a, std::size_t b) { return mean_grad[a] > mean_grad[b]; });

    const std::size_t cap = std::size_t(cfg.densify_cap_factor * double(std::max<std::size_t>(s.seed_count, 1)));
    const std::size_t budget = cap > n ? cap - n : 0;
    if (!picks.empty() && budget < picks.size()) {
        s.warnings.push_back("densify: cloud capped at " + std::to_string(cap) + " Gaussians, " +
                             std::to_string(picks.size() - budget) + " splits skipped");
        picks.resize(budget);
    }
    std::sort(picks.begin(), picks.end());

    const double shrink = std::log(1.6);
    for (std::size_t i : picks) {
        const Eigen::Matrix3d R = rotation_from_quaternion(s.cloud.rotations[i]);
        const Vec3 scale = s.cloud.log_scales[i].array().exp();
        int major = 0;
        scale.maxCoeff(&major);
        const Vec3 offset = 0.5 * scale[major] * R.col(major);
        const Vec3 mu = s.cloud.positions[i];
        const Vec3 ls = s.cloud.log_scales[i] - Vec3::Constant(shrink);
        const double raw = softplus_inverse(0.5 * activate_denza(s.cloud.denza_raw[i]));
        const Quat q = s.cloud.rotations[i];

        s.cloud.positions[i] = mu + offset;
        s.cloud.log_scales[i] = ls;
        s.cloud.denza_raw[i] = raw;
        zero_moments(s.m, i);
        zero_moments(s.v, i);
        s.clamp_streak[i] = 0;

        s.cloud.push_back(mu - offset, ls, q, raw);
        append_zero_moments(s.m);
        append_zero_moments(s.v);
        s.clamp_streak.push_back(0);
        s.grad_accum.push_back(0.0);
        s.grad_count.push_back(0);
    }
    std::fill(s.grad_accum.begin(), s.grad_accum.end(), 0.0);
    std::fill(s.grad_count.begin(), s.grad_count.end(), 0);
    return picks.size();
}

StepEval evaluate_step(const GaussianCloud& cloud, const ProjectionStack& stack, const TiltGeometry& geom,
                       const std::vector<std::size_t>& views, bool with_tv, const TrainConfig& cfg,
                       double data_range)
{
    std::vector<ProjectionImage> renders, meas;
    renders.reserve(views.size());
    meas.reserve(views.size());
    for (std::size_t v : views) {
        renders.push_back(render_view(cloud, geom, v, cfg.render));
        meas.push_back(stack[v]);
    }
    Volume vol;
    const bool tv = with_tv && cfg.weights.lambda_3dtv > 0.0;
    if (tv)
        vol = voxelize(cloud, cfg.tv_grid);
    TotalLossOptions opts;
    opts.ssim_data_range = data_range;
    opts.tv_mode = cfg.tv_mode;
    const LossReport rep = total_loss(renders, meas, tv ? &vol : nullptr, cfg.weights, opts);

    StepEval out;
    out.terms = rep.terms;
    out.grads = CloudGradients(cloud.size());
    for (std::size_t k = 0; k < views.size(); ++k)
        out.grads.add(render_backward(cloud, geom, views[k], rep.d_renders[k], cfg.render));
    if (tv)
        out.grads.add(voxelize_backward(cloud, cfg.tv_grid, rep.d_volume));
    return out;
}

TrainResult train(const ProjectionStack& stack, const TiltGeometry& geom, const GaussianCloud& init,
                  const TrainConfig& cfg, const TrainCallbacks& cb)
{
    cfg.validate();
    if (init.empty())
        throw ValidationError("training needs a nonempty initial cloud");
    init.validate();
    if (stack.size() != geom.num_views() || stack.empty())
        throw ValidationError("stack and geometry view counts differ");
    for (const auto& img : stack.images)
        if (img.nu != geom.detector().nu || img.nv != geom.detector().nv)
            throw ValidationError("stack image size does not match the detector");

    TrainState s(init);
    const double data_range = cfg.ssim_data_range > 0.0 ? cfg.ssim_data_range : stack.max_value();
    if (!(data_range > 0.0))
        throw ValidationError("training stack has no positive signal");

    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<std::size_t> all(stack.size());
    std::iota(all.begin(), all.end(), std::size_t(0));
    const int until = cfg.densify_until();
    auto warn = [&](std::size_t from) {
        for (std::size_t k = from; k < s.warnings.size(); ++k)
            if (cb.on_warning)
                cb.on_warning(s.warnings[k]);
    };

    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<std::size_t> views = all;
        if (cfg.views_per_step > 0 && std::size_t(cfg.views_per_step) < all.size()) {
            std::shuffle(views.begin(), views.end(), rng);
            views.resize(std::size_t(cfg.views_per_step));
            std::sort(views.begin(), views.end());
        }
        const StepEval ev = evaluate_step(s.cloud, stack, geom, views, it % cfg.tv_stride == 0, cfg, data_range);
        if (!std::isfinite(ev.terms.total) || !ev.grads.all_finite())
            throw NonFiniteLoss("non-finite loss or gradient at iteration " + std::to_string(it), s.cloud, it);

        for (std::size_t i = 0; i < s.cloud.size(); ++i) {
            s.grad_accum[i] += ev.grads.d_positions[i].norm();
            s.grad_count[i] += 1;
        }
        adam_step(s, ev.grads, cfg);
        project_constraints(s, cfg);
        s.history.push_back(ev.terms);
        s.iteration = it + 1;

        const std::size_t nw = s.warnings.size();
        if (s.iteration % cfg.densify_interval == 0 && s.iteration <= until)
            densify(s, cfg);
        if (s.iteration % cfg.prune_interval == 0 && s.iteration < cfg.iterations)
            prune(s, cfg);
        warn(nw);
        if (cb.on_step)
            cb.on_step(s, ev.terms);
    }
    return {std::move(s.cloud), std::move(s.history), std::move(s.warnings)};
}

} // namespace denza

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "denza/error.hpp"
#include "denza/gaussians.hpp"
#include "denza/geometry.hpp"
#include "denza/losses.hpp"
#include "denza/projection.hpp"
#include "denza/splatter.hpp"
#include "denza/volume.hpp"

namespace denza {

struct TrainConfig {
    int iterations = 5000;

    // position rate is multiplied by the scene extent (max extent of tv_grid)
    double lr_position = 2e-3;
    double lr_log_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_denza = 5e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;

    int prune_interval = 500;
    double prune_denza_floor = 1e-3;
    int densify_interval = 500;
    double densify_grad_percentile = 90.0;
    double densify_until_fraction = 0.6;
    double densify_cap_factor = 4.0; // times the initial count

    // world units; the upper bound is a fraction of the scene extent
    double min_scale = 0.3;
    double max_scale_fraction = 0.25;

    GridSpec tv_grid;
    int tv_stride = 1;
    TvMode tv_mode = TvMode::Axial3;
    LossWeights weights;
    RenderOptions render;
    double ssim_data_range = 0.0; // 0: max of the training stack

    std::uint64_t rng_seed = 0;
    int views_per_step = 0; // 0: every view each step

    void validate() const;
    double scene_extent() const { return tv_grid.max_extent(); }
    int densify_until() const;
};

struct TrainState {
    GaussianCloud cloud;
    CloudGradients m; // first moments
    CloudGradients v; // second moments
    long adam_steps = 0;
    int iteration = 0;
    std::vector<LossTerms> history;

    std::vector<double> grad_accum; // summed position-gradient norms since the last densify
    std::vector<int> grad_count;
    std::vector<int> clamp_streak; // consecutive prune events spent at a scale bound
    std::size_t seed_count = 0;
    std::vector<std::string> warnings;

    explicit TrainState(GaussianCloud init = {});
    void check_shapes() const;
};

/// Raised when the loss or a gradient stops being finite. Carries the cloud as
/// it was before the failing step.
struct NonFiniteLoss : Error {
    NonFiniteLoss(const std::string& what, GaussianCloud last, int iter)
        : Error(what), last_good(std::move(last)), iteration(iter) {}
    GaussianCloud last_good;
    int iteration;
};

/// Bias-corrected Adam with one learning rate per parameter group.
void adam_step(TrainState& state, const CloudGradients& grads, const TrainConfig& cfg);

/// Unit quaternions and log-scales clipped to the configured bounds.
void project_constraints(TrainState& state, const TrainConfig& cfg);

/// Drops faint Gaussians and those stuck at a scale bound for more than two
/// consecutive calls. Returns the number removed.
std::size_t prune(TrainState& state, const TrainConfig& cfg);

/// Splits Gaussians whose mean accumulated position-gradient norm exceeds the
/// configured percentile. Returns the number of splits.
std::size_t densify(TrainState& state, const TrainConfig& cfg);

struct TrainCallbacks {
    /// After every step with the terms evaluated at the pre-update parameters.
    std::function<void(const TrainState&, const LossTerms&)> on_step;
    std::function<void(const std::string&)> on_warning;
};

struct TrainResult {
    GaussianCloud cloud;
    std::vector<LossTerms> history;
    std::vector<std::string> warnings;
};

/// `stack` and `geom` describe the same (training) views in the same order.
TrainResult train(const ProjectionStack& stack, const TiltGeometry& geom, const GaussianCloud& init,
                  const TrainConfig& cfg, const TrainCallbacks& callbacks = {});

/// One loss evaluation plus full gradient, exposed for tests.
struct StepEval {
    LossTerms terms;
    CloudGradients grads;
};
StepEval evaluate_step(const GaussianCloud& cloud, const ProjectionStack& stack, const TiltGeometry& geom,
                       const std::vector<std::size_t>& views, bool with_tv, const TrainConfig& cfg,
                       double data_range);

} // namespace denza

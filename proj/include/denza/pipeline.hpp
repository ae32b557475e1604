#pragma once

#include <string>
#include <vector>

#include "denza/classical.hpp"
#include "denza/config.hpp"
#include "denza/losses.hpp"
#include "denza/metrics.hpp"
#include "denza/synthdata.hpp"
#include "denza/trainer.hpp"

// Glue between RunConfig and the library, shared by the CLI and the tests.
namespace denza::pipeline {

PhantomSpec make_phantom(const RunConfig& cfg);
GridSpec make_grid(const RunConfig& cfg);
GridSpec make_tv_grid(const RunConfig& cfg);
TiltGeometry make_geometry(const RunConfig& cfg);
TiltGeometry make_geometry(const RunConfig& cfg, std::vector<double> angles);
NoiseModel make_noise(const RunConfig& cfg);
SplitPattern parse_split(const std::string& text);
RampFilter parse_filter(const std::string& text);
TvMode parse_tv_mode(const std::string& text);
LossWeights make_weights(const RunConfig& cfg);
SirtOptions make_sirt_options(const RunConfig& cfg);
SeedOptions make_seed_options(const RunConfig& cfg);
TrainConfig make_train_config(const RunConfig& cfg);

struct Dataset {
    ProjectionStack stack; // every view
    TiltGeometry geom;
    ViewSplit split;

    ProjectionStack train_stack() const { return stack.subset(split.train); }
    TiltGeometry train_geom() const { return geom.subset(split.train); }
};

/// Phantom and tilt series built in memory from the config.
Dataset simulate_dataset(const RunConfig& cfg, Volume* ground_truth = nullptr);
/// Stack and angles read from the configured paths.
Dataset load_dataset(const RunConfig& cfg);

Volume run_fdk(const Dataset& d, const RunConfig& cfg);
Volume run_sirt(const Dataset& d, const RunConfig& cfg);
GaussianCloud run_seed(const Volume& coarse, const RunConfig& cfg);
TrainResult run_train(const Dataset& d, const GaussianCloud& init, const RunConfig& cfg,
                      const TrainCallbacks& cb = {});

/// Axial TV of (estimate - truth), the artifact proxy used by the ablation.
double tv_of_error(const Volume& estimate, const Volume& truth);

struct AblationRow {
    std::string variant; // "full", "no_gamma", "no_freq"
    RunConfig config;
    GaussianCloud cloud;
    EvaluationReport report;
    double volume_tv_error = 0.0; // only with a ground truth
};

std::vector<AblationRow> run_ablation(const Dataset& d, const GaussianCloud& init, const RunConfig& cfg,
                                      const Volume* ground_truth);

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

} // namespace denza::pipeline

#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "denza/gaussians.hpp"
#include "denza/geometry.hpp"
#include "denza/projection.hpp"
#include "denza/splatter.hpp"
#include "denza/synthdata.hpp"
#include "denza/volume.hpp"

namespace denza {

/// Reported for an exact match instead of +inf.
inline constexpr double kPsnrCap = 99.0;

double psnr(const std::vector<double>& a, const std::vector<double>& b, double data_range);
double psnr(const ProjectionImage& a, const ProjectionImage& b, double data_range);
double psnr(const Volume& a, const Volume& b, double data_range);

/// Mean SSIM map; same kernel as ssim_loss.
double ssim(const ProjectionImage& a, const ProjectionImage& b, double data_range);

/// Mean SSIM over every axial, coronal and sagittal slice (nx + ny + nz slices).
double volume_ssim(const Volume& a, const Volume& b, double data_range);

struct MetricRow {
    std::string split; // "train", "test" or "volume"
    std::size_t n_views = 0;
    double psnr_mean = 0.0;
    double ssim_mean = 0.0;
};

struct EvaluationReport {
    double data_range = 0.0;        // max of the measured stack
    double volume_data_range = 0.0; // max of the ground-truth volume, when given
    std::vector<MetricRow> rows;
    std::vector<double> train_psnr, train_ssim, test_psnr, test_ssim;

    const MetricRow* row(const std::string& split) const;
    void write_csv(std::ostream& os) const;
    void write_table(std::ostream& os) const;
};

/// What is being evaluated: a Gaussian cloud (rendered) or a voxel volume
/// (reprojected). `volume_estimate` is compared against the ground truth.
struct EvaluationSubject {
    const GaussianCloud* cloud = nullptr;
    const Volume* volume = nullptr;
    RenderOptions render;
};

EvaluationReport evaluate_run(const EvaluationSubject& subject, const ProjectionStack& stack,
                              const TiltGeometry& geom, const ViewSplit& split,
                              const Volume* gt_volume = nullptr);

} // namespace denza

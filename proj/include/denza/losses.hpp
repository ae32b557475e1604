#pragma once

#include <cstddef>
#include <vector>

#include "denza/projection.hpp"
#include "denza/volume.hpp"

namespace denza {

struct LossWeights {
    double lambda_pixel = 1.0;
    double lambda_freq = 0.1;
    double lambda_ssim = 0.2;
    double lambda_3dtv = 0.01;
    double lambda_hf = 1.0;

    void validate() const;
};

/// A scalar loss together with its gradient with respect to the first argument.
struct ImageLoss {
    double value = 0.0;
    std::vector<double> gradient;
};

struct VolumeLoss {
    double value = 0.0;
    std::vector<double> gradient;
};

/// Smoothing width of |x| inside gradients; reported values stay exact L1.
inline constexpr double kHuberDelta = 1e-6;

/// Mean absolute difference.
ImageLoss pixel_l1(const ProjectionImage& render, const ProjectionImage& meas);

/// Weighted mean over the full DFT plane of | |F render| - |F meas| |, with
/// weight 1 + lambda_hf * (normalized radial frequency).
ImageLoss fourier_amplitude(const ProjectionImage& render, const ProjectionImage& meas, double lambda_hf);

/// Radial weight w(k) in [0, 1] for a frequency bin of an (nv x nu) DFT.
double radial_frequency_weight(int ku, int kv, int nu, int nv);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Mean SSIM over the valid-window map (Gaussian 11x11, sigma 1.5,
/// K1 = 0.01, K2 = 0.03) and its gradient with respect to `a`.
struct SsimResult {
    double mean = 1.0;
    std::vector<double> gradient; // d mean / d a
};
SsimResult ssim_with_gradient(const std::vector<double>& a, const std::vector<double>& b, int nu, int nv,
                              double data_range, bool want_gradient);

/// 1 - mean SSIM.
ImageLoss ssim_loss(const ProjectionImage& render, const ProjectionImage& meas, double data_range);

enum class TvMode { Axial3, Neighbor8 };

/// Anisotropic total variation normalized by the voxel count. Neighbor8 adds
/// the in-slice diagonal forward neighbors with weight 1/sqrt(2).
VolumeLoss tv3d(const Volume& vol, TvMode mode);

struct LossTerms {
    double pixel = 0.0;
    double freq = 0.0;
    double ssim = 0.0;
    double tv3d = 0.0;
    double total = 0.0;
};

struct LossReport {
    LossTerms terms;
    std::vector<ProjectionImage> d_renders; // dTotal / dRender per view
    Volume d_volume;                         // dTotal / dVoxel (empty grid when no volume term)
};

struct TotalLossOptions {
    double ssim_data_range = 1.0;
    TvMode tv_mode = TvMode::Axial3;
};

/// Per-view terms averaged over views, plus the volume regularizer. When
/// `volume` is null the TV term is zero.
LossReport total_loss(const std::vector<ProjectionImage>& renders, const std::vector<ProjectionImage>& meas,
                      const Volume* volume, const LossWeights& weights, const TotalLossOptions& opts);

double recompose_total(const LossTerms& t, const LossWeights& w);

} // namespace denza

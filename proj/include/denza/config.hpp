#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace denza {

// X(type, name, default). Defaults reproduce fixture A.
#define DENZA_RUN_CONFIG_FIELDS(X)                                   \
    /* paths */                                                     \
    X(std::string, stack, "")                                       \
    X(std::string, angles, "")                                      \
    X(std::string, output, "out")                                   \
    X(std::string, volume, "")                                      \
    X(std::string, cloud, "")                                       \
    X(std::string, ground_truth, "")                                \
    /* phantom and acquisition */                                   \
    X(std::string, phantom, "fixture_a")                            \
    X(int, grid_n, 64)                                              \
    X(double, voxel_size, 1.0)                                      \
    X(int, detector_nu, 64)                                         \
    X(int, detector_nv, 64)                                         \
    X(double, pixel_size, 1.0)                                      \
    X(std::string, beam, "parallel")                                \
    X(double, source_distance, 0.0)                                 \
    X(double, detector_distance, 0.0)                               \
    X(double, convergence_angle_deg, 0.0)                           \
    X(double, probe_sigma, 0.0)                                     \
    X(double, tilt_min, -70.0)                                      \
    X(double, tilt_max, 70.0)                                       \
    X(int, n_views, 45)                                             \
    X(double, dose, 1e4)                                            \
    X(double, gaussian_sigma, 0.0)                                  \
    X(bool, probe_blur, false)                                      \
    X(std::string, split, "kept:3")                                 \
    /* classical */                                                 \
    X(std::string, fdk_filter, "ramlak")                            \
    X(int, sirt_iterations, 100)                                    \
    X(double, sirt_relaxation, 1.0)                                 \
    X(bool, sirt_nonneg, true)                                      \
    /* seeding */                                                   \
    X(int, n_points, 20000)                                         \
    X(double, threshold_percentile, 75.0)                           \
    /* training */                                                  \
    X(int, iterations, 5000)                                        \
    X(double, lr_position, 2e-3)                                    \
    X(double, lr_log_scale, 5e-3)                                   \
    X(double, lr_rotation, 1e-3)                                    \
    X(double, lr_denza, 5e-2)                                       \
    X(double, beta1, 0.9)                                           \
    X(double, beta2, 0.999)                                         \
    X(double, epsilon, 1e-15)                                       \
    X(int, prune_interval, 500)                                     \
    X(double, prune_denza_floor, 1e-3)                              \
    X(int, densify_interval, 500)                                   \
    X(double, densify_grad_percentile, 90.0)                        \
    X(double, densify_until_fraction, 0.6)                          \
    X(double, densify_cap_factor, 4.0)                              \
    X(double, min_scale, 0.3)                                       \
    X(double, max_scale_fraction, 0.25)                             \
    X(int, tv_grid_n, 64)                                           \
    X(double, tv_voxel_size, 1.0)                                   \
    X(int, tv_stride, 1)                                            \
    X(std::string, tv_mode, "axial3")                               \
    X(int, views_per_step, 0)                                       \
    X(bool, use_gamma, true)                                        \
    X(int, checkpoint_every, 0)                                     \
    /* losses */                                                    \
    X(double, lambda_pixel, 1.0)                                    \
    X(double, lambda_freq, 0.1)                                     \
    X(double, lambda_ssim, 0.2)                                     \
    X(double, lambda_3dtv, 0.01)                                    \
    X(double, lambda_hf, 1.0)                                       \
    /* metrics */                                                   \
    X(double, ssim_data_range, 0.0)                                 \
    X(std::uint64_t, seed, 7)

struct RunConfig {
#define DENZA_DECLARE_FIELD(type, name, def) type name = def;
    DENZA_RUN_CONFIG_FIELDS(DENZA_DECLARE_FIELD)
#undef DENZA_DECLARE_FIELD

    bool operator==(const RunConfig&) const = default;

    static std::vector<std::string> field_names();
    /// Parses `text` into the named field. Throws ValidationError on an unknown
    /// name or a malformed value.
    void set(const std::string& name, const std::string& text);
    std::string get(const std::string& name) const;

    std::string to_json() const;
    /// Keys must be field names; missing keys keep their current value.
    void merge_json(const std::string& text);

    static RunConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

} // namespace denza

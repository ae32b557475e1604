#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "denza/gaussians.hpp"
#include "denza/losses.hpp"
#include "denza/projection.hpp"
#include "denza/volume.hpp"

namespace denza::io {

namespace fs = std::filesystem;

/// Writes to a sibling temporary file, then renames over `path`.
void atomic_write(const fs::path& path, const std::string& bytes);
std::string read_file(const fs::path& path);

// Tilt angles: one value in degrees per line, stack order.
std::vector<double> read_angles(const fs::path& path);
void write_angles(const fs::path& path, const std::vector<double>& angles);

/// Raw MRC2014 mode-2 content, x fastest.
struct MrcData {
    int nx = 0, ny = 0, nz = 0;
    float cell[3] = {0.f, 0.f, 0.f};   // cell dimensions (world units)
    float origin[3] = {0.f, 0.f, 0.f}; // world position of the grid corner
    bool is_stack = false;             // space group 0 (image stack) vs 1 (volume)
    std::vector<float> data;
};

struct MrcStats {
    float dmin = 0.f, dmax = 0.f, dmean = 0.f, rms = 0.f;
};

MrcData read_mrc(const fs::path& path);
void write_mrc(const fs::path& path, const MrcData& mrc);
MrcStats read_mrc_stats(const fs::path& path);

Volume read_volume(const fs::path& path);
void write_volume(const fs::path& path, const Volume& vol);

/// A stack is an MRC with nz = view count; angles come from the sidecar file.
ProjectionStack read_stack(const fs::path& path, const std::vector<double>& angles);
void write_stack(const fs::path& path, const ProjectionStack& stack);

// Cloud checkpoint: "DZGC", u32 version, u64 count, then f32 arrays
// positions (3N), log_scales (3N), rotations (4N, w x y z), denza_raw (N).
inline constexpr std::uint32_t kCloudVersion = 1;
GaussianCloud read_cloud(const fs::path& path);
void write_cloud(const fs::path& path, const GaussianCloud& cloud);

struct PngNormalization {
    enum class Kind { MinMax, FixedRange };
    Kind kind = Kind::MinMax;
    double lo = 0.0;
    double hi = 1.0;
};

/// 16-bit grayscale PNG; the mapping used is written to `<path>.norm.txt`.
void export_png(const ProjectionImage& img, const fs::path& path, const PngNormalization& norm);

struct Png16 {
    int width = 0, height = 0;
    std::vector<std::uint16_t> pixels;
};
Png16 read_png16(const fs::path& path);

/// Quantized 16-bit value of x under the normalization; used by export_png.
std::uint16_t quantize(double x, double lo, double hi);

/// CSV loss log: iteration,pixel,freq,ssim,tv3d,total
std::string loss_log_header();
std::string loss_log_row(int iteration, const LossTerms& t);

} // namespace denza::io

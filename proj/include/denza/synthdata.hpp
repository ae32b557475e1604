#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "denza/geometry.hpp"
#include "denza/projection.hpp"
#include "denza/volume.hpp"

namespace denza {

enum class PrimitiveShape { Sphere, Shell, Box, Blob };

struct Primitive {
    PrimitiveShape shape = PrimitiveShape::Sphere;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double radius = 0.0;       // Sphere, Shell (outer)
    double inner_radius = 0.0; // Shell
    Eigen::Vector3d half_extents = Eigen::Vector3d::Zero(); // Box
    Eigen::Vector3d sigmas = Eigen::Vector3d::Ones();       // Blob, axis aligned
    double value = 1.0;        // denza; peak value for Blob
};

struct PhantomSpec {
    std::vector<Primitive> primitives;
    GridSpec grid;
};

/// Voxelwise sum of primitive fields, 2x supersampled per axis.
Volume build_phantom(const PhantomSpec& spec);

struct NoiseModel {
    double dose = 0.0;           // expected counts at unit intensity; 0 disables Poisson noise
    double gaussian_sigma = 0.0; // additive read noise
    bool probe_blur = false;     // convolve with the beam's probe sigma before noise
    std::uint64_t rng_seed = 0;
};

ProjectionStack simulate_tilt_series(const Volume& vol, const TiltGeometry& geom, const NoiseModel& noise);

struct SplitPattern {
    enum class Kind { EveryKthHeldOut, EveryKthKept, Explicit };
    Kind kind = Kind::EveryKthKept;
    int k = 3;
    std::vector<std::size_t> train; // Explicit only
    std::vector<std::size_t> test;  // Explicit only

    static SplitPattern held_out(int k) { return {Kind::EveryKthHeldOut, k, {}, {}}; }
    static SplitPattern kept(int k) { return {Kind::EveryKthKept, k, {}, {}}; }
    static SplitPattern explicit_lists(std::vector<std::size_t> train, std::vector<std::size_t> test)
    {
        return {Kind::Explicit, 0, std::move(train), std::move(test)};
    }
};

struct ViewSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// EveryKthHeldOut(k) holds out views with index % k == k / 2; EveryKthKept(k)
/// trains on exactly those views and tests on the rest.
ViewSplit split_views(std::size_t n_views, const SplitPattern& pattern);

/// Core-shell test fixture: 64^3 volume, 45 parallel views over +-70 degrees,
/// 15 training views (every third), dose 1e4.
struct Fixture {
    PhantomSpec phantom;
    TiltGeometry geometry;
    NoiseModel noise;
    SplitPattern split;
};
Fixture fixture_a(std::uint64_t rng_seed = 7);

PhantomSpec fixture_a_phantom();

} // namespace denza

#include "denza/pipeline.hpp"

#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "denza/error.hpp"
#include "denza/io.hpp"
#include "denza/voxelizer.hpp"

namespace denza::pipeline {

using nlohmann::json;

namespace {

Eigen::Vector3d vec3(const json& j, const char* key, Eigen::Vector3d fallback)
{
    if (!j.contains(key))
        return fallback;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        throw ValidationError(std::string("phantom field '") + key + "' needs three numbers");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

PrimitiveShape parse_shape(const std::string& s)
{
    if (s == "sphere")
        return PrimitiveShape::Sphere;
    if (s == "shell")
        return PrimitiveShape::Shell;
    if (s == "box")
        return PrimitiveShape::Box;
    if (s == "blob")
        return PrimitiveShape::Blob;
    throw ValidationError("unknown primitive shape '" + s + "'");
}

} // namespace

GridSpec make_grid(const RunConfig& cfg)
{
    GridSpec g = GridSpec::centered_cube(cfg.grid_n, cfg.voxel_size);
    g.validate();
    return g;
}

GridSpec make_tv_grid(const RunConfig& cfg)
{
    GridSpec g = GridSpec::centered_cube(cfg.tv_grid_n, cfg.tv_voxel_size);
    g.validate();
    return g;
}

PhantomSpec make_phantom(const RunConfig& cfg)
{
    if (cfg.phantom == "fixture_a") {
        PhantomSpec spec = fixture_a_phantom();
        if (!(spec.grid == make_grid(cfg)))
            throw ValidationError("phantom fixture_a is defined on a 64^3 unit grid; set grid_n=64 voxel_size=1");
        return spec;
    }
    // otherwise a JSON file: {"primitives": [{"shape": "sphere", "center": [..], ...}]}
    if (!std::filesystem::exists(cfg.phantom))
        throw ValidationError("phantom must be 'fixture_a' or an existing JSON file: " + cfg.phantom);
    json j;
    try {
        j = json::parse(io::read_file(cfg.phantom));
        PhantomSpec spec;
        spec.grid = make_grid(cfg);
        for (const auto& p : j.at("primitives")) {
            Primitive prim;
            prim.shape = parse_shape(p.at("shape").get<std::string>());
            prim.center = vec3(p, "center", prim.center);
            prim.radius = p.value("radius", 0.0);
            prim.inner_radius = p.value("inner_radius", 0.0);
            prim.half_extents = vec3(p, "half_extents", prim.half_extents);
            prim.sigmas = vec3(p, "sigmas", prim.sigmas);
            prim.value = p.value("value", 1.0);
            spec.primitives.push_back(prim);
        }
        return spec;
    } catch (const json::exception& e) {
        throw ValidationError("bad phantom file " + cfg.phantom + ": " + e.what());
    }
}

TiltGeometry make_geometry(const RunConfig& cfg, std::vector<double> angles)
{
    DetectorGrid det{cfg.detector_nu, cfg.detector_nv, cfg.pixel_size};
    BeamModel beam;
    if (cfg.beam == "parallel")
        beam.kind = BeamKind::Parallel;
    else if (cfg.beam == "cone")
        beam.kind = BeamKind::Cone;
    else
        throw ValidationError("beam must be 'parallel' or 'cone'");
    beam.source_distance = cfg.source_distance;
    beam.detector_distance = cfg.detector_distance;
    beam.convergence_angle_deg = cfg.convergence_angle_deg;
    beam.probe_sigma = cfg.probe_sigma;
    return TiltGeometry(std::move(angles), det, beam);
}

TiltGeometry make_geometry(const RunConfig& cfg)
{
    if (cfg.n_views < 1)
        throw ValidationError("n_views must be >= 1");
    return make_geometry(cfg, TiltGeometry::linspace_angles(cfg.tilt_min, cfg.tilt_max, std::size_t(cfg.n_views)));
}

NoiseModel make_noise(const RunConfig& cfg)
{
    NoiseModel n;
    n.dose = cfg.dose;
    n.gaussian_sigma = cfg.gaussian_sigma;
    n.probe_blur = cfg.probe_blur;
    n.rng_seed = cfg.seed;
    return n;
}

SplitPattern parse_split(const std::string& text)
{
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    if (kind == "all")
        return SplitPattern::explicit_lists({}, {}); // filled by the caller
    if (colon == std::string::npos)
        throw ValidationError("split must be 'kept:<k>', 'held_out:<k>' or 'all'");
    int k = 0;
    try {
        std::size_t used = 0;
        k = std::stoi(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1)
            throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ValidationError("split: bad k in '" + text + "'");
    }
    if (kind == "kept")
        return SplitPattern::kept(k);
    if (kind == "held_out")
        return SplitPattern::held_out(k);
    throw ValidationError("split must be 'kept:<k>', 'held_out:<k>' or 'all'");
}

RampFilter parse_filter(const std::string& text)
{
    if (text == "ramlak")
        return RampFilter::RamLak;
    if (text == "hann")
        return RampFilter::Hann;
    throw ValidationError("fdk_filter must be 'ramlak' or 'hann'");
}

TvMode parse_tv_mode(const std::string& text)
{
    if (text == "axial3")
        return TvMode::Axial3;
    if (text == "neighbor8")
        return TvMode::Neighbor8;
    throw ValidationError("tv_mode must be 'axial3' or 'neighbor8'");
}

LossWeights make_weights(const RunConfig& cfg)
{
    LossWeights w;
    w.lambda_pixel = cfg.lambda_pixel;
    w.lambda_freq = cfg.lambda_freq;
    w.lambda_ssim = cfg.lambda_ssim;
    w.lambda_3dtv = cfg.lambda_3dtv;
    w.lambda_hf = cfg.lambda_hf;
    w.validate();
    return w;
}

SirtOptions make_sirt_options(const RunConfig& cfg)
{
    SirtOptions o;
    o.iterations = cfg.sirt_iterations;
    o.relaxation = cfg.sirt_relaxation;
    o.nonneg = cfg.sirt_nonneg;
    return o;
}

SeedOptions make_seed_options(const RunConfig& cfg)
{
    if (cfg.n_points < 1)
        throw ValidationError("n_points must be >= 1");
    SeedOptions o;
    o.n_points = std::size_t(cfg.n_points);
    o.threshold_percentile = cfg.threshold_percentile;
    o.rng_seed = cfg.seed;
    return o;
}

TrainConfig make_train_config(const RunConfig& cfg)
{
    TrainConfig t;
    t.iterations = cfg.iterations;
    t.lr_position = cfg.lr_position;
    t.lr_log_scale = cfg.lr_log_scale;
    t.lr_rotation = cfg.lr_rotation;
    t.lr_denza = cfg.lr_denza;
    t.beta1 = cfg.beta1;
    t.beta2 = cfg.beta2;
    t.epsilon = cfg.epsilon;
    t.prune_interval = cfg.prune_interval;
    t.prune_denza_floor = cfg.prune_denza_floor;
    t.densify_interval = cfg.densify_interval;
    t.densify_grad_percentile = cfg.densify_grad_percentile;
    t.densify_until_fraction = cfg.densify_until_fraction;
    t.densify_cap_factor = cfg.densify_cap_factor;
    t.min_scale = cfg.min_scale;
    t.max_scale_fraction = cfg.max_scale_fraction;
    t.tv_grid = make_tv_grid(cfg);
    t.tv_stride = cfg.tv_stride;
    t.tv_mode = parse_tv_mode(cfg.tv_mode);
    t.weights = make_weights(cfg);
    t.render.use_gamma = cfg.use_gamma;
    t.ssim_data_range = cfg.ssim_data_range;
    t.rng_seed = cfg.seed;
    t.views_per_step = cfg.views_per_step;
    t.validate();
    return t;
}

namespace {

ViewSplit resolve_split(const RunConfig& cfg, std::size_t n)
{
    if (cfg.split == "all") {
        ViewSplit s;
        for (std::size_t i = 0; i < n; ++i)
            s.train.push_back(i);
        return s;
    }
    return split_views(n, parse_split(cfg.split));
}

} // namespace

Dataset simulate_dataset(const RunConfig& cfg, Volume* ground_truth)
{
    const Volume gt = build_phantom(make_phantom(cfg));
    Dataset d;
    d.geom = make_geometry(cfg);
    d.stack = simulate_tilt_series(gt, d.geom, make_noise(cfg));
    d.split = resolve_split(cfg, d.stack.size());
    if (ground_truth)
        *ground_truth = gt;
    return d;
}

Dataset load_dataset(const RunConfig& cfg)
{
    if (cfg.stack.empty())
        throw ValidationError("missing required flag --stack");
    if (cfg.angles.empty())
        throw ValidationError("missing required flag --angles");
    for (const auto& p : {cfg.stack, cfg.angles})
        if (!std::filesystem::exists(p))
            throw ValidationError("file not found: " + p);
    Dataset d;
    const std::vector<double> angles = io::read_angles(cfg.angles);
    d.stack = io::read_stack(cfg.stack, angles);
    d.geom = make_geometry(cfg, angles);
    if (d.stack.empty() || d.stack[0].nu != cfg.detector_nu || d.stack[0].nv != cfg.detector_nv)
        throw ValidationError("stack image size differs from detector_nu x detector_nv");
    d.split = resolve_split(cfg, d.stack.size());
    return d;
}

Volume run_fdk(const Dataset& d, const RunConfig& cfg)
{
    return fdk_reconstruct(d.train_stack(), d.train_geom(), make_grid(cfg), parse_filter(cfg.fdk_filter));
}

Volume run_sirt(const Dataset& d, const RunConfig& cfg)
{
    return sirt_reconstruct(d.train_stack(), d.train_geom(), make_grid(cfg), make_sirt_options(cfg));
}

GaussianCloud run_seed(const Volume& coarse, const RunConfig& cfg)
{
    return seed_cloud(coarse, make_seed_options(cfg));
}

TrainResult run_train(const Dataset& d, const GaussianCloud& init, const RunConfig& cfg, const TrainCallbacks& cb)
{
    return train(d.train_stack(), d.train_geom(), init, make_train_config(cfg), cb);
}

double tv_of_error(const Volume& estimate, const Volume& truth)
{
    if (!(estimate.grid == truth.grid))
        throw ValidationError("tv_of_error needs matching grids");
    Volume diff(truth.grid);
    for (std::size_t i = 0; i < diff.data.size(); ++i)
        diff.data[i] = estimate.data[i] - truth.data[i];
    return tv3d(diff, TvMode::Axial3).value;
}

std::vector<AblationRow> run_ablation(const Dataset& d, const GaussianCloud& init, const RunConfig& cfg,
                                      const Volume* ground_truth)
{
    std::vector<AblationRow> rows(3);
    rows[0].variant = "full";
    rows[0].config = cfg;
    rows[1].variant = "no_gamma";
    rows[1].config = cfg;
    rows[1].config.use_gamma = false;
    rows[2].variant = "no_freq";
    rows[2].config = cfg;
    rows[2].config.lambda_freq = 0.0;
    for (auto& row : rows) {
        row.cloud = run_train(d, init, row.config).cloud;
        EvaluationSubject subj;
        subj.cloud = &row.cloud;
        subj.render.use_gamma = row.config.use_gamma;
        row.report = evaluate_run(subj, d.stack, d.geom, d.split, ground_truth);
        if (ground_truth)
            row.volume_tv_error = tv_of_error(voxelize(row.cloud, ground_truth->grid), *ground_truth);
    }
    return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows)
{
    os << "variant,train_psnr,train_ssim,test_psnr,test_ssim,volume_psnr,volume_tv_error\n";
    os << std::setprecision(10);
    for (const auto& r : rows) {
        auto get = [&](const char* split, bool ps) {
            const MetricRow* m = r.report.row(split);
            return m ? (ps ? m->psnr_mean : m->ssim_mean) : 0.0;
        };
        os << r.variant << ',' << get("train", true) << ',' << get("train", false) << ',' << get("test", true) << ','
           << get("test", false) << ',' << get("volume", true) << ',' << r.volume_tv_error << '\n';
    }
}

} // namespace denza::pipeline

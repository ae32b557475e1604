#include "denza/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "denza/error.hpp"
#include "denza/io.hpp"
#include "denza/pipeline.hpp"
#include "denza/splatter.hpp"
#include "denza/voxelizer.hpp"

namespace denza {

namespace fs = std::filesystem;
using namespace pipeline;

namespace {

struct Context {
    RunConfig cfg;
    fs::path out_dir;
    std::ostream& out;
    std::ostream& err;

    fs::path path(const std::string& name) const { return out_dir / name; }
};

void require(const std::string& value, const char* flag)
{
    if (value.empty())
        throw ValidationError(std::string("missing required flag --") + flag);
}

void require_file(const std::string& value, const char* flag)
{
    require(value, flag);
    if (!fs::exists(value))
        throw ValidationError(std::string("--") + flag + ": file not found: " + value);
}

void write_text(const fs::path& p, const std::string& s) { io::atomic_write(p, s); }

std::string sum_line(const Volume& v)
{
    double s = 0.0;
    for (double x : v.data)
        s += x;
    std::ostringstream os;
    os << std::setprecision(12) << s;
    return os.str();
}

int cmd_phantom(Context& c)
{
    const Volume vol = build_phantom(make_phantom(c.cfg));
    io::write_volume(c.path("phantom.mrc"), vol);
    c.out << "phantom " << vol.nx() << "x" << vol.ny() << "x" << vol.nz() << " sum " << sum_line(vol) << "\n";
    return kExitOk;
}

int cmd_simulate(Context& c)
{
    Volume gt;
    if (!c.cfg.volume.empty()) {
        require_file(c.cfg.volume, "volume");
        gt = io::read_volume(c.cfg.volume);
    } else {
        gt = build_phantom(make_phantom(c.cfg));
    }
    const TiltGeometry geom = make_geometry(c.cfg);
    const ProjectionStack stack = simulate_tilt_series(gt, geom, make_noise(c.cfg));
    io::write_stack(c.path("stack.mrc"), stack);
    io::write_angles(c.path("angles.tlt"), geom.angles_deg());
    io::write_volume(c.path("ground_truth.mrc"), gt);
    c.out << "simulated " << stack.size() << " views\n";
    return kExitOk;
}

int cmd_fdk(Context& c)
{
    const Dataset d = load_dataset(c.cfg);
    const Volume v = run_fdk(d, c.cfg);
    io::write_volume(c.path("fdk.mrc"), v);
    c.out << "fdk from " << d.split.train.size() << " views\n";
    return kExitOk;
}

int cmd_sirt(Context& c)
{
    const Dataset d = load_dataset(c.cfg);
    std::ostringstream log;
    log << "iteration,residual_norm\n" << std::setprecision(17);
    SirtOptions opts = make_sirt_options(c.cfg);
    opts.on_iteration = [&](int it, double r) { log << it << ',' << r << '\n'; };
    const Volume v = sirt_reconstruct(d.train_stack(), d.train_geom(), make_grid(c.cfg), opts);
    io::write_volume(c.path("sirt.mrc"), v);
    write_text(c.path("sirt_log.csv"), log.str());
    c.out << "sirt " << opts.iterations << " iterations from " << d.split.train.size() << " views\n";
    return kExitOk;
}

int cmd_seed(Context& c)
{
    require_file(c.cfg.volume, "volume");
    const GaussianCloud cloud = run_seed(io::read_volume(c.cfg.volume), c.cfg);
    io::write_cloud(c.path("seed.dzgc"), cloud);
    c.out << "seeded " << cloud.size() << " gaussians\n";
    return kExitOk;
}

int cmd_train(Context& c)
{
    require_file(c.cfg.cloud, "cloud");
    const Dataset d = load_dataset(c.cfg);
    const GaussianCloud init = io::read_cloud(c.cfg.cloud);

    std::string log = io::loss_log_header();
    TrainCallbacks cb;
    const int every = c.cfg.checkpoint_every;
    if (every > 0)
        fs::create_directories(c.path("checkpoints"));
    cb.on_step = [&](const TrainState& s, const LossTerms& t) {
        log += io::loss_log_row(s.iteration - 1, t);
        if (s.iteration % 100 == 0)
            c.out << "iter " << s.iteration << " loss " << t.total << " n " << s.cloud.size() << "\n";
        if (every > 0 && s.iteration % every == 0) {
            std::ostringstream name;
            name << "ckpt_" << std::setw(6) << std::setfill('0') << s.iteration << ".dzgc";
            io::write_cloud(c.path("checkpoints") / name.str(), s.cloud);
        }
    };
    cb.on_warning = [&](const std::string& w) { c.err << "warning: " << w << "\n"; };

    try {
        const TrainResult res = run_train(d, init, c.cfg, cb);
        io::write_cloud(c.path("cloud.dzgc"), res.cloud);
        write_text(c.path("loss_log.csv"), log);
        io::write_volume(c.path("volume.mrc"), voxelize(res.cloud, make_grid(c.cfg)));
        c.out << "trained " << res.history.size() << " iterations, " << res.cloud.size() << " gaussians\n";
    } catch (const NonFiniteLoss& e) {
        io::write_cloud(c.path("last_good.dzgc"), e.last_good);
        write_text(c.path("loss_log.csv"), log);
        throw;
    }
    return kExitOk;
}

TiltGeometry geometry_for_render(const RunConfig& cfg)
{
    if (!cfg.angles.empty()) {
        require_file(cfg.angles, "angles");
        return make_geometry(cfg, io::read_angles(cfg.angles));
    }
    return make_geometry(cfg);
}

int cmd_render(Context& c)
{
    require_file(c.cfg.cloud, "cloud");
    const GaussianCloud cloud = io::read_cloud(c.cfg.cloud);
    const TiltGeometry geom = geometry_for_render(c.cfg);
    RenderOptions ro;
    ro.use_gamma = c.cfg.use_gamma;
    const ProjectionStack stack = render_all(cloud, geom, ro);
    io::write_stack(c.path("render.mrc"), stack);
    io::write_angles(c.path("render.tlt"), geom.angles_deg());
    c.out << "rendered " << stack.size() << " views\n";
    return kExitOk;
}

int cmd_voxelize(Context& c)
{
    require_file(c.cfg.cloud, "cloud");
    const Volume v = voxelize(io::read_cloud(c.cfg.cloud), make_grid(c.cfg));
    io::write_volume(c.path("voxelized.mrc"), v);
    c.out << "voxelized sum " << sum_line(v) << "\n";
    return kExitOk;
}

int cmd_evaluate(Context& c)
{
    if (c.cfg.cloud.empty() == c.cfg.volume.empty())
        throw ValidationError("evaluate needs exactly one of --cloud or --volume");
    const Dataset d = load_dataset(c.cfg);
    GaussianCloud cloud;
    Volume vol, gt;
    EvaluationSubject subj;
    subj.render.use_gamma = c.cfg.use_gamma;
    if (!c.cfg.cloud.empty()) {
        require_file(c.cfg.cloud, "cloud");
        cloud = io::read_cloud(c.cfg.cloud);
        subj.cloud = &cloud;
    } else {
        require_file(c.cfg.volume, "volume");
        vol = io::read_volume(c.cfg.volume);
        subj.volume = &vol;
    }
    const Volume* gtp = nullptr;
    if (!c.cfg.ground_truth.empty()) {
        require_file(c.cfg.ground_truth, "ground_truth");
        gt = io::read_volume(c.cfg.ground_truth);
        gtp = &gt;
    }
    const EvaluationReport rep = evaluate_run(subj, d.stack, d.geom, d.split, gtp);
    std::ostringstream csv, table;
    rep.write_csv(csv);
    rep.write_table(table);
    write_text(c.path("report.csv"), csv.str());
    write_text(c.path("report.txt"), table.str());
    c.out << table.str();
    return kExitOk;
}

int cmd_ablate(Context& c)
{
    require_file(c.cfg.cloud, "cloud");
    const Dataset d = load_dataset(c.cfg);
    const GaussianCloud init = io::read_cloud(c.cfg.cloud);
    Volume gt;
    const Volume* gtp = nullptr;
    if (!c.cfg.ground_truth.empty()) {
        require_file(c.cfg.ground_truth, "ground_truth");
        gt = io::read_volume(c.cfg.ground_truth);
        gtp = &gt;
    }
    const auto rows = run_ablation(d, init, c.cfg, gtp);
    for (const auto& r : rows)
        io::write_cloud(c.path("ablate_" + r.variant + ".dzgc"), r.cloud);
    std::ostringstream csv;
    write_ablation_csv(csv, rows);
    write_text(c.path("ablation.csv"), csv.str());
    c.out << csv.str();
    return kExitOk;
}

const std::vector<std::pair<std::string, std::string>>& subcommands()
{
    static const std::vector<std::pair<std::string, std::string>> subs = {
        {"phantom", "build the phantom volume"},
        {"simulate", "simulate a noisy tilt series"},
        {"fdk", "filtered backprojection of the training views"},
        {"sirt", "SIRT reconstruction of the training views"},
        {"seed", "seed a Gaussian cloud from a coarse volume"},
        {"train", "optimize a Gaussian cloud against the training views"},
        {"render", "render a cloud into a projection stack"},
        {"voxelize", "sample a cloud onto the voxel grid"},
        {"evaluate", "PSNR/SSIM on train and test views"},
        {"ablate", "train full, gamma-off and frequency-loss-off variants"},
    };
    return subs;
}

int dispatch(const std::string& name, Context& c)
{
    static const std::map<std::string, std::function<int(Context&)>> table = {
        {"phantom", cmd_phantom}, {"simulate", cmd_simulate}, {"fdk", cmd_fdk},
        {"sirt", cmd_sirt},       {"seed", cmd_seed},         {"train", cmd_train},
        {"render", cmd_render},   {"voxelize", cmd_voxelize}, {"evaluate", cmd_evaluate},
        {"ablate", cmd_ablate},
    };
    return table.at(name)(c);
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Gaussian splatting reconstruction for tilt-series tomography"};
    app.name("denza");
    app.require_subcommand(1, 1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON file whose keys are config field names");

    const RunConfig defaults;
    std::map<std::string, std::string> raw;
    std::map<std::string, CLI::Option*> opts;
    for (const auto& name : RunConfig::field_names())
        opts[name] = app.add_option("--" + name, raw[name])->default_str(defaults.get(name));
    for (const auto& [name, desc] : subcommands())
        app.add_subcommand(name, desc)->fallthrough();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << "usage: denza <subcommand> [--config FILE] [--<field> VALUE ...]\n";
        return kExitUsage;
    }

    const std::string sub = app.get_subcommands().front()->get_name();
    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        for (const auto& [name, opt] : opts)
            if (opt->count() > 0)
                cfg.set(name, raw[name]);
        require(cfg.output, "output");
        Context ctx{cfg, fs::path(cfg.output), out, err};
        fs::create_directories(ctx.out_dir);
        cfg.save(ctx.path("config.json"));
        return dispatch(sub, ctx);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "runtime failure: " << e.what() << "\n";
        return kExitRuntime;
    }
}

} // namespace denza

#include "denza/metrics.hpp"

#include <cmath>
#include <iomanip>

#include "denza/classical.hpp"
#include "denza/error.hpp"
#include "denza/losses.hpp"
#include "denza/voxelizer.hpp"

namespace denza {

double psnr(const std::vector<double>& a, const std::vector<double>& b, double data_range)
{
    if (a.size() != b.size() || a.empty())
        throw ValidationError("psnr shape mismatch");
    if (!(data_range > 0.0))
        throw ValidationError("psnr data_range must be positive");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        se += d * d;
    }
    const double mse = se / double(a.size());
    if (mse == 0.0)
        return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(data_range * data_range / mse));
}

double psnr(const ProjectionImage& a, const ProjectionImage& b, double data_range)
{
    if (!a.same_shape(b))
        throw ValidationError("psnr shape mismatch");
    return psnr(a.data, b.data, data_range);
}

double psnr(const Volume& a, const Volume& b, double data_range)
{
    if (a.nx() != b.nx() || a.ny() != b.ny() || a.nz() != b.nz())
        throw ValidationError("psnr shape mismatch");
    return psnr(a.data, b.data, data_range);
}

double ssim(const ProjectionImage& a, const ProjectionImage& b, double data_range)
{
    if (!a.same_shape(b))
        throw ValidationError("ssim shape mismatch");
    return ssim_with_gradient(a.data, b.data, a.nu, a.nv, data_range, false).mean;
}

double volume_ssim(const Volume& a, const Volume& b, double data_range)
{
    if (a.nx() != b.nx() || a.ny() != b.ny() || a.nz() != b.nz())
        throw ValidationError("volume_ssim shape mismatch");
    const int nx = a.nx(), ny = a.ny(), nz = a.nz();
    if (std::min({nx, ny, nz}) < kSsimWindow)
        throw ValidationError("volume_ssim needs at least 11 voxels along every axis");

    double sum = 0.0;
    std::size_t count = 0;
    auto slice_pair = [&](int axis, int idx) {
        // (rows, cols) of the slice perpendicular to `axis`
        const int cols = axis == 0 ? ny : nx;
        const int rows = axis == 2 ? ny : nz;
        std::vector<double> sa(std::size_t(rows) * cols), sb(sa.size());
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                int i, j, k;
                if (axis == 0) { i = idx; j = c; k = r; }
                else if (axis == 1) { i = c; j = idx; k = r; }
                else { i = c; j = r; k = idx; }
                sa[std::size_t(r) * cols + c] = a.at(i, j, k);
                sb[std::size_t(r) * cols + c] = b.at(i, j, k);
            }
        return ssim_with_gradient(sa, sb, cols, rows, data_range, false).mean;
    };
    for (int axis = 0; axis < 3; ++axis) {
        const int n = axis == 0 ? nx : axis == 1 ? ny : nz;
        for (int idx = 0; idx < n; ++idx) {
            sum += slice_pair(axis, idx);
            ++count;
        }
    }
    return sum / double(count);
}

const MetricRow* EvaluationReport::row(const std::string& split) const
{
    for (const auto& r : rows)
        if (r.split == split)
            return &r;
    return nullptr;
}

void EvaluationReport::write_csv(std::ostream& os) const
{
    os << "# data_range=" << std::setprecision(17) << data_range;
    if (volume_data_range > 0.0)
        os << " volume_data_range=" << volume_data_range;
    os << "\nsplit,n_views,psnr_mean,ssim_mean\n";
    for (const auto& r : rows)
        os << r.split << ',' << r.n_views << ',' << std::setprecision(17) << r.psnr_mean << ','
           << r.ssim_mean << '\n';
}

void EvaluationReport::write_table(std::ostream& os) const
{
    os << "data range " << data_range << "\n";
    os << std::left << std::setw(8) << "split" << std::right << std::setw(8) << "views" << std::setw(12)
       << "PSNR" << std::setw(10) << "SSIM" << '\n';
    for (const auto& r : rows)
        os << std::left << std::setw(8) << r.split << std::right << std::setw(8) << r.n_views << std::setw(12)
           << std::fixed << std::setprecision(3) << r.psnr_mean << std::setw(10) << std::setprecision(4)
           << r.ssim_mean << '\n';
    os << std::defaultfloat;
}

EvaluationReport evaluate_run(const EvaluationSubject& subject, const ProjectionStack& stack,
                              const TiltGeometry& geom, const ViewSplit& split, const Volume* gt_volume)
{
    if ((subject.cloud == nullptr) == (subject.volume == nullptr))
        throw ValidationError("evaluate needs exactly one of a cloud or a volume");
    if (stack.size() != geom.num_views())
        throw ValidationError("stack and geometry view counts differ");
    for (const auto* list : {&split.train, &split.test})
        for (std::size_t v : *list)
            if (v >= stack.size())
                throw ValidationError("split references missing view " + std::to_string(v));

    EvaluationReport rep;
    rep.data_range = stack.max_value();
    if (!(rep.data_range > 0.0))
        throw ValidationError("measured stack has no positive values");

    auto reproject = [&](std::size_t view) {
        return subject.cloud ? render_view(*subject.cloud, geom, view, subject.render)
                             : project_volume(*subject.volume, geom, view);
    };
    auto eval_split = [&](const std::string& name, const std::vector<std::size_t>& views,
                          std::vector<double>& ps, std::vector<double>& ss) {
        for (std::size_t v : views) {
            const ProjectionImage img = reproject(v);
            ps.push_back(psnr(img, stack[v], rep.data_range));
            ss.push_back(ssim(img, stack[v], rep.data_range));
        }
        MetricRow row;
        row.split = name;
        row.n_views = views.size();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            row.psnr_mean += ps[i];
            row.ssim_mean += ss[i];
        }
        if (!ps.empty()) {
            row.psnr_mean /= double(ps.size());
            row.ssim_mean /= double(ss.size());
        }
        rep.rows.push_back(row);
    };
    eval_split("train", split.train, rep.train_psnr, rep.train_ssim);
    eval_split("test", split.test, rep.test_psnr, rep.test_ssim);

    if (gt_volume) {
        const Volume est = subject.volume ? *subject.volume : voxelize(*subject.cloud, gt_volume->grid);
        if (!(est.grid == gt_volume->grid))
            throw ValidationError("reconstructed volume grid differs from the ground truth grid");
        double vmax = 0.0;
        for (double x : gt_volume->data)
            vmax = std::max(vmax, x);
        rep.volume_data_range = vmax;
        MetricRow row;
        row.split = "volume";
        row.psnr_mean = psnr(est, *gt_volume, vmax);
        row.ssim_mean = volume_ssim(est, *gt_volume, vmax);
        rep.rows.push_back(row);
    }
    return rep;
}

} // namespace denza

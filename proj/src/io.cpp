#include "denza/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <png.h>

#include "denza/error.hpp"

namespace denza::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void atomic_write(const fs::path& path, const std::string& bytes)
{
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw Error("cannot write " + path.string());
        os.write(bytes.data(), std::streamsize(bytes.size()));
        if (!os)
            throw Error("write failed for " + path.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::vector<double> read_angles(const fs::path& path)
{
    std::istringstream in(read_file(path));
    std::vector<double> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        std::istringstream ls(line);
        double a = 0.0;
        if (!(ls >> a))
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not an angle");
        out.push_back(a);
    }
    return out;
}

void write_angles(const fs::path& path, const std::vector<double>& angles)
{
    std::ostringstream os;
    os << std::setprecision(17);
    for (double a : angles)
        os << a << '\n';
    atomic_write(path, os.str());
}

// ---------------------------------------------------------------------------
// MRC2014

namespace {

constexpr std::size_t kMrcHeader = 1024;

template <typename T>
T get(const std::string& buf, std::size_t offset)
{
    T v;
    std::memcpy(&v, buf.data() + offset, sizeof(T));
    return v;
}

template <typename T>
void put(std::string& buf, std::size_t offset, T v)
{
    std::memcpy(buf.data() + offset, &v, sizeof(T));
}

MrcStats stats_of(const std::vector<float>& data)
{
    MrcStats s;
    if (data.empty())
        return s;
    double mn = data[0], mx = data[0], sum = 0.0;
    for (float x : data) {
        mn = std::min<double>(mn, x);
        mx = std::max<double>(mx, x);
        sum += x;
    }
    const double mean = sum / double(data.size());
    double var = 0.0;
    for (float x : data)
        var += (x - mean) * (x - mean);
    s.dmin = float(mn);
    s.dmax = float(mx);
    s.dmean = float(mean);
    s.rms = float(std::sqrt(var / double(data.size())));
    return s;
}

} // namespace

MrcData read_mrc(const fs::path& path)
{
    const std::string buf = read_file(path);
    if (buf.size() < kMrcHeader)
        throw FormatError(path.string() + ": truncated MRC header");
    if (buf.compare(208, 4, "MAP ") != 0)
        throw FormatError(path.string() + ": bad MRC map magic");
    MrcData m;
    m.nx = get<std::int32_t>(buf, 0);
    m.ny = get<std::int32_t>(buf, 4);
    m.nz = get<std::int32_t>(buf, 8);
    const std::int32_t mode = get<std::int32_t>(buf, 12);
    if (mode != 2)
        throw FormatError(path.string() + ": unsupported MRC mode " + std::to_string(mode) +
                          " (mode 2, 32-bit float, required)");
    if (m.nx < 1 || m.ny < 1 || m.nz < 1)
        throw FormatError(path.string() + ": non-positive MRC dimensions nx/ny/nz");
    for (int a = 0; a < 3; ++a) {
        m.cell[a] = get<float>(buf, 40 + 4 * a);
        m.origin[a] = get<float>(buf, 196 + 4 * a);
    }
    m.is_stack = get<std::int32_t>(buf, 88) == 0;
    const std::int32_t nsymbt = get<std::int32_t>(buf, 92);
    if (nsymbt < 0)
        throw FormatError(path.string() + ": negative extended header size");
    const std::size_t count = std::size_t(m.nx) * m.ny * m.nz;
    const std::size_t start = kMrcHeader + std::size_t(nsymbt);
    if (buf.size() < start + count * sizeof(float))
        throw FormatError(path.string() + ": truncated MRC data (header nx*ny*nz = " + std::to_string(count) +
                          " values, file holds " +
                          std::to_string(buf.size() > start ? (buf.size() - start) / 4 : 0) + ")");
    m.data.resize(count);
    std::memcpy(m.data.data(), buf.data() + start, count * sizeof(float));
    return m;
}

MrcStats read_mrc_stats(const fs::path& path)
{
    const std::string buf = read_file(path);
    if (buf.size() < kMrcHeader)
        throw FormatError(path.string() + ": truncated MRC header");
    return {get<float>(buf, 76), get<float>(buf, 80), get<float>(buf, 84), get<float>(buf, 216)};
}

void write_mrc(const fs::path& path, const MrcData& m)
{
    const std::size_t count = std::size_t(std::max(m.nx, 0)) * std::max(m.ny, 0) * std::max(m.nz, 0);
    if (m.nx < 1 || m.ny < 1 || m.nz < 1 || count == 0)
        throw ValidationError("refusing to write an empty MRC volume");
    if (m.data.size() != count)
        throw ValidationError("MRC payload size does not match nx*ny*nz");

    std::string buf(kMrcHeader + count * sizeof(float), '\0');
    put<std::int32_t>(buf, 0, m.nx);
    put<std::int32_t>(buf, 4, m.ny);
    put<std::int32_t>(buf, 8, m.nz);
    put<std::int32_t>(buf, 12, 2);
    put<std::int32_t>(buf, 28, m.nx);
    put<std::int32_t>(buf, 32, m.ny);
    put<std::int32_t>(buf, 36, m.nz);
    for (int a = 0; a < 3; ++a) {
        put<float>(buf, 40 + 4 * a, m.cell[a]);
        put<float>(buf, 52 + 4 * a, 90.0f);
        put<std::int32_t>(buf, 64 + 4 * a, a + 1);
        put<float>(buf, 196 + 4 * a, m.origin[a]);
    }
    const MrcStats s = stats_of(m.data);
    put<float>(buf, 76, s.dmin);
    put<float>(buf, 80, s.dmax);
    put<float>(buf, 84, s.dmean);
    put<std::int32_t>(buf, 88, m.is_stack ? 0 : 1);
    put<std::int32_t>(buf, 92, 0);
    std::memcpy(buf.data() + 104, "MRCO", 4);
    put<std::int32_t>(buf, 108, 20140);
    std::memcpy(buf.data() + 208, "MAP ", 4);
    const unsigned char machst[4] = {0x44, 0x44, 0x00, 0x00};
    std::memcpy(buf.data() + 212, machst, 4);
    put<float>(buf, 216, s.rms);
    put<std::int32_t>(buf, 220, 1);
    const char label[] = "denza";
    std::memcpy(buf.data() + 224, label, sizeof(label) - 1);
    std::memcpy(buf.data() + kMrcHeader, m.data.data(), count * sizeof(float));
    atomic_write(path, buf);
}

Volume read_volume(const fs::path& path)
{
    const MrcData m = read_mrc(path);
    GridSpec g;
    g.nx = m.nx;
    g.ny = m.ny;
    g.nz = m.nz;
    g.voxel_size = m.cell[0] > 0.f ? double(m.cell[0]) / m.nx : 1.0;
    g.origin = Eigen::Vector3d(m.origin[0], m.origin[1], m.origin[2]);
    Volume vol(g);
    std::copy(m.data.begin(), m.data.end(), vol.data.begin());
    return vol;
}

void write_volume(const fs::path& path, const Volume& vol)
{
    MrcData m;
    m.nx = vol.nx();
    m.ny = vol.ny();
    m.nz = vol.nz();
    m.cell[0] = float(vol.nx() * vol.grid.voxel_size);
    m.cell[1] = float(vol.ny() * vol.grid.voxel_size);
    m.cell[2] = float(vol.nz() * vol.grid.voxel_size);
    for (int a = 0; a < 3; ++a)
        m.origin[a] = float(vol.grid.origin[a]);
    m.data.assign(vol.data.begin(), vol.data.end());
    write_mrc(path, m);
}

ProjectionStack read_stack(const fs::path& path, const std::vector<double>& angles)
{
    const MrcData m = read_mrc(path);
    if (std::size_t(m.nz) != angles.size())
        throw ValidationError(path.string() + ": stack has " + std::to_string(m.nz) + " images but " +
                              std::to_string(angles.size()) + " angles were given");
    ProjectionStack stack;
    const std::size_t plane = std::size_t(m.nx) * m.ny;
    for (int z = 0; z < m.nz; ++z) {
        ProjectionImage img(m.nx, m.ny);
        img.view = std::size_t(z);
        img.angle_deg = angles[std::size_t(z)];
        std::copy(m.data.begin() + std::ptrdiff_t(z * plane), m.data.begin() + std::ptrdiff_t((z + 1) * plane),
                  img.data.begin());
        stack.images.push_back(std::move(img));
    }
    return stack;
}

void write_stack(const fs::path& path, const ProjectionStack& stack)
{
    if (stack.empty())
        throw ValidationError("refusing to write an empty stack");
    MrcData m;
    m.nx = stack[0].nu;
    m.ny = stack[0].nv;
    m.nz = int(stack.size());
    m.is_stack = true;
    m.cell[0] = float(m.nx);
    m.cell[1] = float(m.ny);
    m.cell[2] = float(m.nz);
    for (const auto& img : stack.images) {
        if (!img.same_shape(stack[0]))
            throw ValidationError("stack images must share dimensions");
        m.data.insert(m.data.end(), img.data.begin(), img.data.end());
    }
    write_mrc(path, m);
}

// ---------------------------------------------------------------------------
// Cloud checkpoints

void write_cloud(const fs::path& path, const GaussianCloud& cloud)
{
    const std::uint64_t n = cloud.size();
    std::string buf;
    buf.reserve(16 + n * 11 * sizeof(float));
    buf.append("DZGC", 4);
    auto append = [&](const void* p, std::size_t bytes) { buf.append(static_cast<const char*>(p), bytes); };
    append(&kCloudVersion, sizeof(kCloudVersion));
    append(&n, sizeof(n));
    auto put_f = [&](double x) {
        const float f = float(x);
        append(&f, sizeof(f));
    };
    for (const auto& p : cloud.positions)
        for (int a = 0; a < 3; ++a)
            put_f(p[a]);
    for (const auto& s : cloud.log_scales)
        for (int a = 0; a < 3; ++a)
            put_f(s[a]);
    for (const auto& q : cloud.rotations)
        for (int a = 0; a < 4; ++a)
            put_f(q[a]);
    for (double d : cloud.denza_raw)
        put_f(d);
    atomic_write(path, buf);
}

GaussianCloud read_cloud(const fs::path& path)
{
    const std::string buf = read_file(path);
    if (buf.size() < 16 || buf.compare(0, 4, "DZGC") != 0)
        throw FormatError(path.string() + ": not a DZGC cloud checkpoint");
    const auto version = get<std::uint32_t>(buf, 4);
    if (version != kCloudVersion)
        throw FormatError(path.string() + ": unsupported cloud version " + std::to_string(version));
    const auto n = get<std::uint64_t>(buf, 8);
    if (n > (buf.size() - 16) / (11 * sizeof(float)) || buf.size() != 16 + n * 11 * sizeof(float))
        throw FormatError(path.string() + ": cloud payload size does not match count " + std::to_string(n));

    std::size_t off = 16;
    auto next = [&] {
        const float f = get<float>(buf, off);
        off += sizeof(float);
        return double(f);
    };
    GaussianCloud c;
    c.positions.resize(n);
    c.log_scales.resize(n);
    c.rotations.resize(n);
    c.denza_raw.resize(n);
    for (auto& p : c.positions)
        for (int a = 0; a < 3; ++a)
            p[a] = next();
    for (auto& s : c.log_scales)
        for (int a = 0; a < 3; ++a)
            s[a] = next();
    for (auto& q : c.rotations)
        for (int a = 0; a < 4; ++a)
            q[a] = next();
    for (auto& d : c.denza_raw)
        d = next();
    return c;
}

// ---------------------------------------------------------------------------
// PNG export

std::uint16_t quantize(double x, double lo, double hi)
{
    if (!(hi > lo))
        return 0;
    const double t = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
    return std::uint16_t(std::lround(t * 65535.0));
}

void export_png(const ProjectionImage& img, const fs::path& path, const PngNormalization& norm)
{
    for (double x : img.data)
        if (!std::isfinite(x))
            throw ValidationError("cannot export an image with non-finite pixels");
    double lo = norm.lo, hi = norm.hi;
    if (norm.kind == PngNormalization::Kind::MinMax) {
        lo = *std::min_element(img.data.begin(), img.data.end());
        hi = *std::max_element(img.data.begin(), img.data.end());
    } else if (!(hi > lo)) {
        throw ValidationError("fixed PNG range needs hi > lo");
    }

    fs::path tmp = path;
    tmp += ".tmp";
    FILE* fp = std::fopen(tmp.c_str(), "wb");
    if (!fp)
        throw Error("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw Error("libpng failed writing " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(img.nu), png_uint_32(img.nv), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(std::size_t(img.nu) * 2);
    for (int v = 0; v < img.nv; ++v) {
        for (int u = 0; u < img.nu; ++u) {
            const std::uint16_t q = quantize(img.at(u, v), lo, hi);
            row[2 * std::size_t(u)] = png_byte(q >> 8); // PNG is big-endian
            row[2 * std::size_t(u) + 1] = png_byte(q & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fs::rename(tmp, path);

    std::ostringstream side;
    side << std::setprecision(17) << "normalization "
         << (norm.kind == PngNormalization::Kind::MinMax ? "minmax" : "fixed") << "\nlo " << lo << "\nhi " << hi
         << "\nbits 16\n";
    fs::path sidecar = path;
    sidecar += ".norm.txt";
    atomic_write(sidecar, side.str());
}

Png16 read_png16(const fs::path& path)
{
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp)
        throw Error("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw FormatError("libpng failed reading " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    Png16 out;
    out.width = int(png_get_image_width(png, info));
    out.height = int(png_get_image_height(png, info));
    if (png_get_bit_depth(png, info) != 16 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw FormatError(path.string() + ": expected 16-bit grayscale");
    }
    std::vector<png_byte> row(std::size_t(out.width) * 2);
    out.pixels.resize(std::size_t(out.width) * out.height);
    for (int v = 0; v < out.height; ++v) {
        png_read_row(png, row.data(), nullptr);
        for (int u = 0; u < out.width; ++u)
            out.pixels[std::size_t(v) * out.width + u] =
                std::uint16_t((row[2 * std::size_t(u)] << 8) | row[2 * std::size_t(u) + 1]);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return out;
}

std::string loss_log_header()
{
    return "iteration,pixel,freq,ssim,tv3d,total\n";
}

std::string loss_log_row(int iteration, const LossTerms& t)
{
    std::ostringstream os;
    os << std::setprecision(17) << iteration << ',' << t.pixel << ',' << t.freq << ',' << t.ssim << ',' << t.tv3d
       << ',' << t.total << '\n';
    return os.str();
}

} // namespace denza::io

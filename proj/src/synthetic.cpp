#include "leaf/synthetic.hpp"

#include "leaf/image_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace leaf {

namespace {

struct Shape2d {
    bool ellipse = false;
    double cy = 0, cx = 0, ry = 0, rx = 0;

    bool contains(double y, double x) const {
        const double dy = (y - cy) / ry;
        const double dx = (x - cx) / rx;
        if (ellipse) return dy * dy + dx * dx <= 1.0;
        return std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
    }
};

double quantize(double v) { return std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

Sample make_synthetic_sample(std::mt19937_64& rng, const std::string& id, const SyntheticOptions& opt) {
    const Index n = opt.size;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<Index> count_dist(opt.min_objects, opt.max_objects);
    const auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    // Object layout, resampled until the mask coverage lands in range.
    std::vector<Shape2d> shapes;
    std::vector<int> owner(static_cast<std::size_t>(n * n), -1);
    for (int attempt = 0;; ++attempt) {
        if (attempt > 1000) throw ContractError("synthetic layout did not reach the coverage range");
        shapes.clear();
        const Index k = count_dist(rng);
        for (Index s = 0; s < k; ++s) {
            Shape2d sh;
            sh.ellipse = u01(rng) < 0.5;
            sh.ry = uni(0.08, 0.3) * static_cast<double>(n);
            sh.rx = uni(0.08, 0.3) * static_cast<double>(n);
            sh.cy = uni(sh.ry * 0.5, static_cast<double>(n) - sh.ry * 0.5);
            sh.cx = uni(sh.rx * 0.5, static_cast<double>(n) - sh.rx * 0.5);
            shapes.push_back(sh);
        }
        std::fill(owner.begin(), owner.end(), -1);
        Index covered = 0;
        for (Index y = 0; y < n; ++y)
            for (Index x = 0; x < n; ++x)
                for (std::size_t s = 0; s < shapes.size(); ++s)
                    if (shapes[s].contains(static_cast<double>(y) + 0.5, static_cast<double>(x) + 0.5)) {
                        owner[static_cast<std::size_t>(y * n + x)] = static_cast<int>(s);
                        ++covered;
                        break;
                    }
        const double frac = static_cast<double>(covered) / static_cast<double>(n * n);
        if (frac >= opt.min_coverage && frac <= opt.max_coverage) break;
    }

    // Background: depth ramp far from the camera, stripe-textured color.
    const double ramp_angle = uni(0.0, 2.0 * std::numbers::pi);
    const double depth_lo = uni(0.05, 0.2);
    const double depth_span = uni(0.1, 0.25);
    const double bg_base[3] = {uni(0.2, 0.8), uni(0.2, 0.8), uni(0.2, 0.8)};
    const double freq = uni(0.2, 0.6);
    const double tex_angle = uni(0.0, std::numbers::pi);
    std::vector<double> obj_depth;
    std::vector<std::array<double, 3>> obj_color;
    for (std::size_t s = 0; s < shapes.size(); ++s) {
        obj_depth.push_back(uni(0.65, 0.95));
        std::array<double, 3> c{};
        for (int ch = 0; ch < 3; ++ch) {
            // Push each channel away from the background mean for contrast.
            const double shift = uni(0.25, 0.45);
            c[static_cast<std::size_t>(ch)] = bg_base[ch] > 0.5 ? bg_base[ch] - shift : bg_base[ch] + shift;
        }
        obj_color.push_back(c);
    }

    std::normal_distribution<double> depth_noise(0.0, opt.depth_noise);
    std::normal_distribution<double> color_noise(0.0, 0.03);
    Sample out;
    out.id = id;
    out.rgb = Tensor(Shape{3, n, n});
    out.depth = Tensor(Shape{1, n, n});
    out.gt = Tensor(Shape{1, n, n});
    const double inv = 1.0 / static_cast<double>(std::max<Index>(n - 1, 1));
    for (Index y = 0; y < n; ++y) {
        for (Index x = 0; x < n; ++x) {
            const Index i = y * n + x;
            const int s = owner[static_cast<std::size_t>(i)];
            const double yy = static_cast<double>(y) * inv;
            const double xx = static_cast<double>(x) * inv;
            double d = 0;
            if (s >= 0) {
                d = obj_depth[static_cast<std::size_t>(s)];
            } else {
                const double t = 0.5 + 0.5 * (std::cos(ramp_angle) * (xx - 0.5) + std::sin(ramp_angle) * (yy - 0.5));
                d = depth_lo + depth_span * t;
            }
            out.depth[i] = static_cast<Real>(quantize(d + depth_noise(rng)));
            out.gt[i] = s >= 0 ? Real(1) : Real(0);
            const double stripe =
                0.12 * std::sin(freq * (std::cos(tex_angle) * static_cast<double>(x) +
                                        std::sin(tex_angle) * static_cast<double>(y)));
            for (int ch = 0; ch < 3; ++ch) {
                const double base = s >= 0 ? obj_color[static_cast<std::size_t>(s)][static_cast<std::size_t>(ch)]
                                           : bg_base[ch] + stripe;
                out.rgb[ch * n * n + i] = static_cast<Real>(quantize(base + color_noise(rng)));
            }
        }
    }
    return out;
}

std::vector<Sample> make_synthetic_set(Index n, Index size, std::uint64_t seed, Index objects) {
    if (n <= 0) throw ConfigError("sample count must be positive");
    if (size < 8) throw ConfigError("synthetic image size must be at least 8");
    SyntheticOptions opt;
    opt.size = size;
    if (objects > 0) opt.min_objects = opt.max_objects = objects;
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        // Each sample seeds from (seed, index) alone, so a larger set extends a smaller one.
        std::seed_seq child{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                            static_cast<std::uint32_t>(i)};
        std::mt19937_64 rng(child);
        char id[32];
        std::snprintf(id, sizeof(id), "s%05td", i);
        out.push_back(make_synthetic_sample(rng, id, opt));
    }
    return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
    for (const auto& s : samples) {
        write_ppm(dir / (s.id + "_rgb.ppm"), s.rgb);
        write_pgm(dir / (s.id + "_depth.pgm"), s.depth);
        write_pgm(dir / (s.id + "_gt.pgm"), s.gt);
    }
}

void gen_synthetic(Index n, Index size, std::uint64_t seed, const std::filesystem::path& dir) {
    write_dataset(dir, make_synthetic_set(n, size, seed));
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<std::string> ids;
    const std::string suffix = "_rgb.ppm";
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw DataError("no *_rgb.ppm samples found in " + dir.string());
    std::vector<Sample> out;
    for (const auto& id : ids) {
        Sample s;
        s.id = id;
        s.rgb = read_ppm(dir / (id + "_rgb.ppm"));
        s.depth = read_pgm(dir / (id + "_depth.pgm"));
        s.gt = read_pgm(dir / (id + "_gt.pgm"));
        if (s.depth.dim(1) != s.rgb.dim(1) || s.depth.dim(2) != s.rgb.dim(2) || s.gt.shape() != s.depth.shape()) {
            throw DataError("sample " + id + " has mismatched image extents");
        }
        for (auto& v : s.gt.data()) v = v > Real(0.5) ? Real(1) : Real(0);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace leaf

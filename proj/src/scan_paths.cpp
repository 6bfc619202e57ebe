#include "leaf/scan_paths.hpp"

#include <algorithm>
#include <sstream>

namespace leaf {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

// Tiles in raster order along `dir`; tokens within a tile likewise.
std::vector<Index> windowed_order(Direction dir, Index window, Index H, Index W) {
    std::vector<Index> order;
    order.reserve(static_cast<std::size_t>(H * W));
    const Index tiles_y = H / window;
    const Index tiles_x = W / window;
    auto visit_tile = [&](Index ty, Index tx) {
        if (dir == Direction::Horizontal) {
            for (Index y = 0; y < window; ++y)
                for (Index x = 0; x < window; ++x) order.push_back((ty * window + y) * W + tx * window + x);
        } else {
            for (Index x = 0; x < window; ++x)
                for (Index y = 0; y < window; ++y) order.push_back((ty * window + y) * W + tx * window + x);
        }
    };
    if (dir == Direction::Horizontal) {
        for (Index ty = 0; ty < tiles_y; ++ty)
            for (Index tx = 0; tx < tiles_x; ++tx) visit_tile(ty, tx);
    } else {
        for (Index tx = 0; tx < tiles_x; ++tx)
            for (Index ty = 0; ty < tiles_y; ++ty) visit_tile(ty, tx);
    }
    return order;
}

void check_extents(Index H, Index W) {
    if (H <= 0 || W <= 0) throw ConfigError("scan grid extents must be positive");
}

}  // namespace

std::string to_string(const ScanSpec& spec) {
    std::string s = spec.direction == Direction::Horizontal ? "H" : "V";
    if (spec.flipped) s += "F";
    return s + std::to_string(spec.window);
}

ScanSpec parse_scan_spec(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    if (parts.size() < 2 || parts.size() > 3) {
        throw ConfigError("scan spec '" + text + "' must look like H,flip,4 or V,noflip,2");
    }
    ScanSpec spec;
    std::string dir = parts[0];
    std::transform(dir.begin(), dir.end(), dir.begin(), ::toupper);
    if (dir == "H" || dir == "HF") {
        spec.direction = Direction::Horizontal;
    } else if (dir == "V" || dir == "VF") {
        spec.direction = Direction::Vertical;
    } else {
        throw ConfigError("scan spec direction must be H or V, got '" + parts[0] + "'");
    }
    spec.flipped = dir.size() == 2;
    if (parts.size() == 3) {
        const std::string& f = parts[1];
        if (f == "flip" || f == "1" || f == "true" || f == "F") {
            spec.flipped = true;
        } else if (f != "noflip" && f != "0" && f != "false" && !f.empty()) {
            throw ConfigError("scan spec flip flag must be flip/noflip, got '" + f + "'");
        }
    }
    try {
        spec.window = std::stoll(parts.back());
    } catch (const std::exception&) {
        throw ConfigError("scan spec window must be an integer, got '" + parts.back() + "'");
    }
    if (spec.window <= 0) throw ConfigError("scan window must be positive");
    return spec;
}

ScanPermutation make_permutation(std::vector<Index> forward) {
    ScanPermutation p;
    p.n = static_cast<Index>(forward.size());
    p.inverse.assign(forward.size(), -1);
    for (Index k = 0; k < p.n; ++k) {
        const Index t = forward[k];
        if (t < 0 || t >= p.n || p.inverse[t] != -1) throw ContractError("scan order is not a bijection");
        p.inverse[t] = k;
    }
    p.forward = std::move(forward);
    return p;
}

ScanPermutation build_scan(const ScanSpec& spec, Index H, Index W) {
    check_extents(H, W);
    if (spec.window <= 0) throw ConfigError("scan window must be positive");
    if (H % spec.window != 0 || W % spec.window != 0) {
        throw ConfigError("grid " + std::to_string(H) + "x" + std::to_string(W) + " is not divisible by window " +
                          std::to_string(spec.window) + " (scan " + to_string(spec) + ")");
    }
    auto order = windowed_order(spec.direction, spec.window, H, W);
    if (spec.flipped) std::reverse(order.begin(), order.end());
    return make_permutation(std::move(order));
}

std::array<ScanSpec, 4> msw_specs(const std::array<Index, 4>& windows) {
    return {ScanSpec{Direction::Horizontal, false, windows[0]}, ScanSpec{Direction::Horizontal, true, windows[1]},
            ScanSpec{Direction::Vertical, false, windows[2]}, ScanSpec{Direction::Vertical, true, windows[3]}};
}

std::vector<ScanPath> build_msw_set(Index H, Index W, const std::array<Index, 4>& windows) {
    std::vector<ScanPath> out;
    for (const auto& spec : msw_specs(windows)) out.push_back({spec, build_scan(spec, H, W)});
    return out;
}

Index clamp_window(Index window, Index H, Index W) {
    for (Index w = std::min({window, H, W}); w > 1; --w) {
        if (H % w == 0 && W % w == 0) return w;
    }
    return 1;
}

ScanPermutation build_ablation_scan(ScanKind kind, int direction, Index H, Index W, Index window) {
    check_extents(H, W);
    if (direction < 0 || direction > 3) throw ConfigError("scan direction index must be in 0..3");
    const Direction dir = direction < 2 ? Direction::Horizontal : Direction::Vertical;
    const bool flipped = direction % 2 == 1;
    switch (kind) {
        case ScanKind::SS2D:
            return build_scan({dir, flipped, 1}, H, W);
        case ScanKind::FixedWindow:
        case ScanKind::MultiScaleWindow:
            return build_scan({dir, flipped, window}, H, W);
        case ScanKind::Continuous: {
            std::vector<Index> order;
            order.reserve(static_cast<std::size_t>(H * W));
            if (dir == Direction::Horizontal) {
                for (Index y = 0; y < H; ++y)
                    for (Index i = 0; i < W; ++i) order.push_back(y * W + (y % 2 == 0 ? i : W - 1 - i));
            } else {
                for (Index x = 0; x < W; ++x)
                    for (Index i = 0; i < H; ++i) order.push_back((x % 2 == 0 ? i : H - 1 - i) * W + x);
            }
            if (flipped) std::reverse(order.begin(), order.end());
            return make_permutation(std::move(order));
        }
    }
    throw ConfigError("unknown scan kind");
}

std::vector<ScanPermutation> mixer_permutations(const MixerScan& scan, Index H, Index W) {
    std::vector<ScanPermutation> out;
    out.reserve(4);
    for (int d = 0; d < 4; ++d) {
        Index window = 1;
        if (scan.kind == ScanKind::MultiScaleWindow) window = scan.windows[static_cast<std::size_t>(d)];
        if (scan.kind == ScanKind::FixedWindow) window = scan.fixed_window;
        out.push_back(build_ablation_scan(scan.kind, d, H, W, clamp_window(window, H, W)));
    }
    return out;
}

Var gather(const Var& x, const ScanPermutation& p) {
    if (x.value().rank() != 3) throw ShapeError("gather expects [C,H,W], got " + shape_str(x.shape()));
    const Index C = x.dim(0);
    if (x.dim(1) * x.dim(2) != p.n) {
        throw ShapeError("gather: grid " + shape_str(x.shape()) + " has " + std::to_string(x.dim(1) * x.dim(2)) +
                         " tokens but permutation covers " + std::to_string(p.n));
    }
    return gather_columns(reshape(x, {C, p.n}), p.forward);
}

Var scatter(const Var& y, const ScanPermutation& p, Index H, Index W) {
    if (y.value().rank() != 2 || y.dim(1) != p.n || H * W != p.n) {
        throw ShapeError("scatter: sequence " + shape_str(y.shape()) + " does not match permutation of length " +
                         std::to_string(p.n) + " on " + std::to_string(H) + "x" + std::to_string(W));
    }
    return reshape(gather_columns(y, p.inverse), {y.dim(0), H, W});
}

}  // namespace leaf

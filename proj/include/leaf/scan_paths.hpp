#pragma once

#include "leaf/ops.hpp"

#include <array>
#include <string>
#include <vector>

namespace leaf {

enum class Direction { Horizontal, Vertical };

/// A windowed raster traversal of an H x W token grid.
struct ScanSpec {
    Direction direction = Direction::Horizontal;
    bool flipped = false;
    Index window = 1;

    bool operator==(const ScanSpec&) const = default;
};

std::string to_string(const ScanSpec& spec);
/// Parses "H,flip,4" / "V,noflip,2" / "HF,2" style specs.
ScanSpec parse_scan_spec(const std::string& text);

/// forward[k] is the row-major token index visited at sequence position k.
struct ScanPermutation {
    Index n = 0;
    std::vector<Index> forward;
    std::vector<Index> inverse;
};

ScanPermutation make_permutation(std::vector<Index> forward);

ScanPermutation build_scan(const ScanSpec& spec, Index height, Index width);

/// The default multi-scale set H1, HF2, V4, VF8, in that order.
std::array<ScanSpec, 4> msw_specs(const std::array<Index, 4>& windows = {1, 2, 4, 8});

struct ScanPath {
    ScanSpec spec;
    ScanPermutation perm;
};

std::vector<ScanPath> build_msw_set(Index height, Index width, const std::array<Index, 4>& windows = {1, 2, 4, 8});

/// Largest window not exceeding `window` that divides both extents.
Index clamp_window(Index window, Index height, Index width);

enum class ScanKind { MultiScaleWindow, SS2D, Continuous, FixedWindow };

struct MixerScan {
    ScanKind kind = ScanKind::MultiScaleWindow;
    Index fixed_window = 2;
    std::array<Index, 4> windows{1, 2, 4, 8};
};

/// Direction index 0..3 = row, row reversed, column, column reversed.
ScanPermutation build_ablation_scan(ScanKind kind, int direction, Index height, Index width, Index window = 1);

/// The four per-branch permutations a mixer uses on an H x W map. Windows
/// larger than the map are clamped with clamp_window.
std::vector<ScanPermutation> mixer_permutations(const MixerScan& scan, Index height, Index width);

/// x[C,H,W] -> [C,L] in scan order.
Var gather(const Var& x, const ScanPermutation& p);
/// y[C,L] in scan order -> [C,H,W].
Var scatter(const Var& y, const ScanPermutation& p, Index height, Index width);

}  // namespace leaf

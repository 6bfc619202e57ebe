#pragma once

#include "leaf/scan_paths.hpp"

#include <algorithm>
#include <tuple>
#include <vector>

namespace leaf::oracle {

// Independent enumerator: sort every token by its (tile, in-tile) key in the
// scan direction, then reverse for flipped specs.
inline std::vector<Index> brute_force_scan(const ScanSpec& s, Index H, Index W) {
    std::vector<std::tuple<Index, Index, Index, Index, Index>> keyed;
    for (Index r = 0; r < H; ++r)
        for (Index c = 0; c < W; ++c) {
            const Index tr = r / s.window, tc = c / s.window, ir = r % s.window, ic = c % s.window;
            if (s.direction == Direction::Horizontal) keyed.emplace_back(tr, tc, ir, ic, r * W + c);
            else keyed.emplace_back(tc, tr, ic, ir, r * W + c);
        }
    std::sort(keyed.begin(), keyed.end());
    std::vector<Index> out;
    for (const auto& k : keyed) out.push_back(std::get<4>(k));
    if (s.flipped) std::reverse(out.begin(), out.end());
    return out;
}

}  // namespace leaf::oracle

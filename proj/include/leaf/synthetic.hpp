#pragma once

#include "leaf/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace leaf {

struct Sample {
    std::string id;
    Tensor rgb;    // [3,H,W] in [0,1]
    Tensor depth;  // [1,H,W] in [0,1]
    Tensor gt;     // [1,H,W] in {0,1}
};

struct SyntheticOptions {
    Index size = 64;
    Index min_objects = 1;
    Index max_objects = 3;
    double min_coverage = 0.02;
    double max_coverage = 0.6;
    double depth_noise = 0.05;
};

/// One scene of 1 to 3 rectangles or ellipses on a textured background.
/// Values are quantized to 8 bits so the in-memory sample equals its file form.
Sample make_synthetic_sample(std::mt19937_64& rng, const std::string& id, const SyntheticOptions& opt = {});

/// Per-index child seeds make sample i independent of how many came before.
std::vector<Sample> make_synthetic_set(Index n, Index size, std::uint64_t seed, Index objects = 0);

/// Writes `<id>_rgb.ppm`, `<id>_depth.pgm`, `<id>_gt.pgm` for each sample.
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);
void gen_synthetic(Index n, Index size, std::uint64_t seed, const std::filesystem::path& dir);

/// Loads every `<id>_rgb.ppm` triple in `dir`, sorted by id. gt is binarized at 0.5.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

}  // namespace leaf

#pragma once

#include "leaf/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace leaf {

/// 8-bit image with interleaved channels (1 for PGM, 3 for PPM).
struct Image8 {
    Index width = 0;
    Index height = 0;
    Index channels = 0;
    std::vector<std::uint8_t> pixels;

    bool operator==(const Image8&) const = default;
};

/// Malformed netpbm input. `offset` is the byte position where parsing failed.
struct ParseError : DataError {
    ParseError(const std::string& what, std::size_t offset)
        : DataError(what + " at byte " + std::to_string(offset)), offset(offset) {}
    std::size_t offset;
};

/// Parses binary P6 / P5 with maxval 255.
Image8 decode_netpbm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_netpbm(const Image8& image);

Image8 read_netpbm(const std::filesystem::path& path);
void write_netpbm(const std::filesystem::path& path, const Image8& image);

/// [C,H,W] tensor in [0,1] from an 8-bit image (value / 255).
Tensor image_to_tensor(const Image8& image);
/// Rounds value * 255 after clamping to [0,1].
Image8 tensor_to_image(const Tensor& t);

Tensor read_ppm(const std::filesystem::path& path);
Tensor read_pgm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);
void write_pgm(const std::filesystem::path& path, const Tensor& gray);

}  // namespace leaf

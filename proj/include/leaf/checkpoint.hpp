#pragma once

#include "leaf/config.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace leaf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Parsed checkpoint contents.
struct Checkpoint {
    ConfigMap config;
    std::vector<NamedTensor> tensors;
};

/// "LEAF", u32 version, u32-length config block, u32 tensor count, then
/// per tensor: u32 name length, name, u8 dtype (0 f32, 1 f64), u32 rank,
/// u32 extents, raw little-endian values. All integers little-endian.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

Checkpoint make_checkpoint(const LeafModel& model);
void save_checkpoint(const std::filesystem::path& path, const LeafModel& model);

/// Rebuilds the model from the stored config, then copies every tensor in.
/// Missing, extra or mis-shaped tensors are a DataError.
std::unique_ptr<LeafModel> load_model(const std::filesystem::path& path);
std::unique_ptr<LeafModel> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace leaf

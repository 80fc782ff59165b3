#pragma once

#include <cstdint>
#include <string>

#include "medqc/model.hpp"

namespace medqc {

inline constexpr char kCheckpointMagic[8] = {'M', 'E', 'D', 'Q', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   magic[8] version:u32 meta_len:u64 meta[meta_len] tensor_count:u32
//   per tensor: name_len:u32 name ndim:u32 dims:u64[ndim] data:f64[prod(dims)]
// `metadata` is an opaque UTF-8 blob (JSON in practice).
struct Checkpoint {
  std::string metadata;
  TensorStore tensors;
};

std::string serialize_checkpoint(const std::string& metadata, const TensorStore& tensors);
Checkpoint deserialize_checkpoint(const std::string& bytes);  // throws InputError

void save_checkpoint(const std::string& path, const std::string& metadata, const TensorStore& tensors);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace medqc

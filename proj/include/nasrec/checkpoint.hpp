#pragma once

#include <cstdint>
#include <filesystem>

#include "nasrec/params.hpp"

namespace nasrec {

// Binary checkpoint, all integers and floats little-endian:
//
//   bytes 0..7   magic "NASRECK\0"
//   u32          format version (kCheckpointVersion)
//   u64          optimizer step counter
//   u32          parameter count
//   per parameter:
//     u32 name length, name bytes (UTF-8, no terminator)
//     u8 kind (0 weight, 1 bias, 2 norm, 3 embedding), u8 trainable
//     u32 rank, u64 extents[rank]
//     f32 values[prod(extents)]
//     f32 adagrad accumulators[prod(extents)]
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore<float> params;
  std::uint64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const ParamStore<float>& params,
                     std::uint64_t step);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nasrec

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "auggen/numerics/parameter.hpp"

namespace auggen::numerics {

// Binary layout, all integers little-endian:
//   char[8]  magic "AUGGENCK"
//   u32      format version (kCheckpointVersion)
//   u32      parameter count
//   per parameter:
//     u32 name length, name bytes (no terminator)
//     u32 rank, u64 extent[rank]
//     f32 values[prod(extents)]
inline constexpr char kCheckpointMagic[8] = {'A', 'U', 'G', 'G', 'E', 'N', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ParameterSet& params);
ParameterSet read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::filesystem::path& path);

}  // namespace auggen::numerics

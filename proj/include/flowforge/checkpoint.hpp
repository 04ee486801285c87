#ifndef FLOWFORGE_CHECKPOINT_HPP
#define FLOWFORGE_CHECKPOINT_HPP

#include <span>

#include "flowforge/flo_io.hpp"
#include "flowforge/parameters.hpp"

namespace flowforge {

inline constexpr char kCheckpointMagic[4] = {'F', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// magic, u32 version, u32 count, then per parameter: u32 name length, name,
/// u32 rank, i32 dims, float32 data; all little-endian.
Bytes encode_checkpoint(const ParameterSet<float>& params);
ParameterSet<float> decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Copies values from `loaded` into `target` by name; every parameter of
/// `target` must be present with identical dims.
void assign_parameters(ParameterSet<float>& target, const ParameterSet<float>& loaded);

}  // namespace flowforge

#endif  // FLOWFORGE_CHECKPOINT_HPP

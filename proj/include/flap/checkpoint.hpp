#pragma once

#include <string>

#include "flap/params.hpp"

namespace flap {

// Little-endian binary container for model parameters.
//
//   header: magic "FLAPCKPT" (8 bytes) | version u32 | param count u32
//   per parameter, in registry order:
//     name length u32 | name bytes | rank u32 | extents u64[rank] |
//     fp64 payload (row-major)
//
// Payload bytes are the in-memory fp64 values, so save/load round-trips are
// bit-exact on any little-endian host.
void save_checkpoint(const std::string& path, const ParamStore& params);

// Loads into an existing registry; every name and shape must match.
void load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace flap

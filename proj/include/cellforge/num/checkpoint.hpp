#pragma once

#include <string>

#include "cellforge/num/graph.hpp"

namespace cellforge::num {

// Parameter checkpoint, magic "CFP1": per tensor a u32 name length, the
// UTF-8 name, u32 rank, u64 dims, then 64-bit little-endian values.

void save_params(const ParamStore& store, const std::string& path);
ParamStore load_params(const std::string& path);

}  // namespace cellforge::num

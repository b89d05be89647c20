#pragma once

#include <string>

#include "pldiff/nn.hpp"

namespace pldiff {

// Parameter checkpoints: <prefix>.json manifest (name, shape, byte offset,
// crc32) plus <prefix>.f32, one flat little-endian float blob. Round trips
// are bit-exact.
void save_checkpoint(const ParamStore<float>& params, const std::string& prefix);

// Loads by name into an existing store; every stored name must be present
// with a matching shape.
void load_checkpoint(ParamStore<float>& params, const std::string& prefix);

}  // namespace pldiff

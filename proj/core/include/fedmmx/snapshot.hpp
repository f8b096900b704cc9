#pragma once

#include <string>

#include "fedmmx/nam.hpp"

namespace fedmmx {

// Parameter snapshot: a single-line JSON layout header (modality ids, dims,
// hidden, classes, count) followed by the flattened parameters as
// little-endian 64-bit floats.
void save_params(const NamParams& params, const std::string& path);
NamParams load_params(const std::string& path);

}  // namespace fedmmx

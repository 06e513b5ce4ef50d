#pragma once

#include <string>

#include "eyelab/ablation.hpp"

namespace eyelab {

// Reads any libpng-supported PNG, normalized to 8-bit RGB.
RasterImage read_png(const std::string& path);

// Writes 8-bit RGB with fixed encoder settings, so identical pixels always
// produce identical files.
void write_png(const std::string& path, const RasterImage& image);

}  // namespace eyelab

#pragma once

#include <string>

#include "signshield/tensor.hpp"

namespace signshield {

/// Reads a binary P6 PPM into an {H,W,3} tensor with values in [0,1].
/// Throws FormatError (naming the file) on malformed input, IoError if the
/// file cannot be opened.
Tensor read_ppm(const std::string& path);

/// Writes an {H,W,3} tensor in [0,1] as binary P6 with maxval 255.
void write_ppm(const std::string& path, const Tensor& image);

}  // namespace signshield

#pragma once

#include <array>

#include "signshield/rng.hpp"
#include "signshield/tensor.hpp"

namespace signshield {

/// JPEG Annex K luminance quantization table, row-major 8x8.
extern const std::array<int, 64> kJpegBaseTable;

/// Base table scaled by the quality factor: scale = 5000/q below 50,
/// 200 - 2q otherwise; entries clamp(round(base*scale/100), 1, 255).
std::array<int, 64> jpeg_quant_table(int quality);

/// Crops a random floor(fraction*side) window per axis (row offset drawn
/// before column offset) and bilinearly resizes back to the input extent.
/// fraction 1.0 reproduces the input bit-for-bit.
Tensor random_crop_resize(const Tensor& x, float fraction, Rng& rng);

/// Quantizes every value to the 2^bits-point lattice over [0,1]:
/// v -> round(v*(2^bits-1)) / (2^bits-1).
Tensor bit_squeeze(const Tensor& x, int bits);

/// v >= 0.5 -> 1.0, else 0.0.
Tensor binary_filter(const Tensor& x);

/// Frequency-domain filter: per channel, level-shifted 8x8 orthonormal
/// DCT-II, quantization by jpeg_quant_table(quality), inverse transform,
/// clamp to [0,1]. Edge blocks are padded by edge replication.
Tensor dct_quantize(const Tensor& x, int quality);

}  // namespace signshield

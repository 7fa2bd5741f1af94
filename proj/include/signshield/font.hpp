#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "signshield/tensor.hpp"

namespace signshield {

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;
inline constexpr int kGlyphGap = 1;  // inter-glyph spacing in glyph units

/// True for characters the built-in font covers (A-Z, 0-9).
bool glyph_available(char c);

/// Row bitmasks for a glyph; bit 4 is the leftmost column.
const std::array<std::uint8_t, kGlyphHeight>& glyph_rows(char c);

bool glyph_pixel(char c, int row, int col);

/// Pixel width of a word at integer scale (glyphs plus 1-unit gaps).
int word_width(const std::string& word, int scale);

/// Draws a word's glyph pixels in `color`; non-glyph pixels untouched.
void draw_word(Tensor& img, const std::string& word, int top, int left, int scale,
               const std::array<float, 3>& color);

}  // namespace signshield

#include "signshield/font.hpp"

#include <unordered_map>

#include "signshield/errors.hpp"

namespace signshield {

namespace {

using Glyph = std::array<std::uint8_t, 7>;

// 5x7 uppercase + digit bitmaps; bit 4 = leftmost column.
const std::unordered_map<char, Glyph>& glyph_table() {
    static const std::unordered_map<char, Glyph> table = {
        {'A', {0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001}},
        {'B', {0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110}},
        {'C', {0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110}},
        {'D', {0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110}},
        {'E', {0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111}},
        {'F', {0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000}},
        {'G', {0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01110}},
        {'H', {0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001}},
        {'I', {0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
        {'J', {0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100}},
        {'K', {0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001}},
        {'L', {0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111}},
        {'M', {0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001}},
        {'N', {0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001, 0b10001}},
        {'O', {0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110}},
        {'P', {0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000}},
        {'Q', {0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101}},
        {'R', {0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001}},
        {'S', {0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110}},
        {'T', {0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100}},
        {'U', {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110}},
        {'V', {0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100}},
        {'W', {0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b11011, 0b10001}},
        {'X', {0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001}},
        {'Y', {0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100}},
        {'Z', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111}},
        {'0', {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110}},
        {'1', {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
        {'2', {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111}},
        {'3', {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110}},
        {'4', {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010}},
        {'5', {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110}},
        {'6', {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110}},
        {'7', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000}},
        {'8', {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110}},
        {'9', {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100}},
    };
    return table;
}

}  // namespace

bool glyph_available(char c) { return glyph_table().count(c) > 0; }

const std::array<std::uint8_t, kGlyphHeight>& glyph_rows(char c) {
    auto it = glyph_table().find(c);
    if (it == glyph_table().end()) {
        throw ParamError(std::string("no glyph for character '") + c + "'");
    }
    return it->second;
}

bool glyph_pixel(char c, int row, int col) {
    return (glyph_rows(c)[row] >> (kGlyphWidth - 1 - col)) & 1;
}

int word_width(const std::string& word, int scale) {
    if (word.empty()) return 0;
    const int n = static_cast<int>(word.size());
    return (n * kGlyphWidth + (n - 1) * kGlyphGap) * scale;
}

void draw_word(Tensor& img, const std::string& word, int top, int left, int scale,
               const std::array<float, 3>& color) {
    int x = left;
    for (char c : word) {
        for (int gr = 0; gr < kGlyphHeight; ++gr) {
            for (int gc = 0; gc < kGlyphWidth; ++gc) {
                if (!glyph_pixel(c, gr, gc)) continue;
                for (int sr = 0; sr < scale; ++sr) {
                    for (int sc = 0; sc < scale; ++sc) {
                        const int r = top + gr * scale + sr;
                        const int cc = x + gc * scale + sc;
                        if (r < 0 || r >= img.height() || cc < 0 || cc >= img.width()) continue;
                        for (int ch = 0; ch < 3; ++ch) img.at(r, cc, ch) = color[ch];
                    }
                }
            }
        }
        x += (kGlyphWidth + kGlyphGap) * scale;
    }
}

}  // namespace signshield

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "signshield/tensor.hpp"

namespace signshield {

/// Minimum |normalized cross-correlation| for a glyph match.
inline constexpr float kGlyphThreshold = 0.8f;

struct TextRegion {
    int row = 0;
    int col = 0;
    int height = 0;
    int width = 0;
};

struct WordDetection {
    std::string word;
    TextRegion region;
    float score = 0.0f;  // min member-glyph score, in [0,1]
};

/// Finds rendered words by sliding normalized cross-correlation of the 5x7
/// glyph templates over the mean-RGB grayscale image. Searched scales are
/// the generator's letter and digit scales +-1 pixel. Matching is
/// polarity-insensitive (|ncc|), so dark-on-light and light-on-dark text
/// both register. Flat (zero-variance) windows never match. Matched glyphs
/// are grouped into words by row band and horizontal adjacency; a gap wider
/// than two scale units starts a new word.
std::vector<WordDetection> detect_text(const Tensor& x);

/// One distinguishing token set and the class it identifies.
struct WordLabelEntry {
    std::vector<std::string> tokens;
    int class_id = 0;
};

/// Token-set table for the text-bearing classes. Entries are pairwise
/// non-subsuming, validated on first use.
const std::vector<WordLabelEntry>& word_label_map();

/// Returns the class whose full token set is contained in `words`
/// (case-insensitive, surrounding whitespace ignored). Zero or multiple
/// matching entries yield nullopt.
std::optional<int> map_to_label(const std::vector<std::string>& words);

/// Convenience composition: detect_text then map_to_label.
std::optional<int> feature_label(const Tensor& x);

}  // namespace signshield

#include "signshield/featuremap.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <string>

#include "signshield/dataset.hpp"
#include "signshield/errors.hpp"
#include "signshield/font.hpp"

namespace signshield {

namespace {

struct GlyphHit {
    char ch = 0;
    int row = 0;
    int col = 0;
    int scale = 1;
    float score = 0.0f;
    int height() const { return kGlyphHeight * scale; }
    int width() const { return kGlyphWidth * scale; }
};

// Inclusive-exclusive integral image with one row/col of zero padding.
struct Integral {
    int h = 0, w = 0;
    std::vector<double> sum;
    std::vector<double> sumsq;

    explicit Integral(const std::vector<float>& gray, int h_, int w_) : h(h_), w(w_) {
        sum.assign(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
        sumsq.assign(sum.size(), 0.0);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const std::size_t i = static_cast<std::size_t>(r) * w + c;
                const double v = gray[i];
                const std::size_t o = static_cast<std::size_t>(r + 1) * (w + 1) + (c + 1);
                const std::size_t up = o - (w + 1);
                sum[o] = v + sum[o - 1] + sum[up] - sum[up - 1];
                sumsq[o] = v * v + sumsq[o - 1] + sumsq[up] - sumsq[up - 1];
            }
        }
    }

    double block(const std::vector<double>& t, int r0, int c0, int bh, int bw) const {
        const std::size_t a = static_cast<std::size_t>(r0) * (w + 1) + c0;
        const std::size_t b = static_cast<std::size_t>(r0 + bh) * (w + 1) + (c0 + bw);
        const std::size_t up = static_cast<std::size_t>(r0) * (w + 1) + (c0 + bw);
        const std::size_t lo = static_cast<std::size_t>(r0 + bh) * (w + 1) + c0;
        return t[b] - t[up] - t[lo] + t[a];
    }
};

// Templates carry one cell of empty margin on every side: rendered glyphs
// are isolated by at least one scale unit of background, while glyph-shaped
// structures in sign artwork (frame corners, bar ends) continue past the
// window and stop correlating once the margin is part of the template.
constexpr int kPadW = kGlyphWidth + 2;
constexpr int kPadH = kGlyphHeight + 2;

std::vector<int> glyph_scales(int h, int w) {
    const int base = std::max(1, std::min(h, w) / 64);
    std::set<int> uniq;
    for (int s : {base - 1, base, base + 1, 2 * base - 1, 2 * base, 2 * base + 1}) {
        if (s >= 1 && kPadH * s <= h && kPadW * s <= w) uniq.insert(s);
    }
    return {uniq.begin(), uniq.end()};
}

bool rects_intersect(const GlyphHit& a, const GlyphHit& b) {
    return a.row < b.row + b.height() && b.row < a.row + a.height() &&
           a.col < b.col + b.width() && b.col < a.col + a.width();
}

}  // namespace

std::vector<WordDetection> detect_text(const Tensor& x) {
    if (x.rank() != 3 || x.channels() != 3) {
        throw ShapeError("detect_text: expected {H,W,3}, got " + shape_to_string(x.shape));
    }
    const int h = x.height(), w = x.width();
    std::vector<float> gray(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            gray[static_cast<std::size_t>(r) * w + c] =
                (x.at(r, c, 0) + x.at(r, c, 1) + x.at(r, c, 2)) / 3.0f;
        }
    }
    const Integral integral(gray, h, w);

    std::vector<GlyphHit> hits;
    for (int s : glyph_scales(h, w)) {
        const int th = kPadH * s, tw = kPadW * s;
        const double area = static_cast<double>(th) * tw;
        for (char ch : std::string("ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789")) {
            std::vector<std::pair<int, int>> set_cells;  // in padded-grid cells
            for (int gr = 0; gr < kGlyphHeight; ++gr) {
                for (int gc = 0; gc < kGlyphWidth; ++gc) {
                    if (glyph_pixel(ch, gr, gc)) set_cells.emplace_back(gr + 1, gc + 1);
                }
            }
            const double n_set = static_cast<double>(set_cells.size()) * s * s;
            const double t_mean = n_set / area;
            const double t_var = n_set - n_set * n_set / area;
            if (t_var <= 0.0) continue;

            for (int r = 0; r + th <= h; ++r) {
                for (int c = 0; c + tw <= w; ++c) {
                    const double w_sum = integral.block(integral.sum, r, c, th, tw);
                    const double w_sumsq = integral.block(integral.sumsq, r, c, th, tw);
                    const double w_var = w_sumsq - w_sum * w_sum / area;
                    if (w_var <= 1e-9) continue;  // flat window: correlation undefined
                    double t_dot_w = 0.0;
                    for (const auto& [gr, gc] : set_cells) {
                        t_dot_w += integral.block(integral.sum, r + gr * s, c + gc * s, s, s);
                    }
                    const double cov = t_dot_w - t_mean * w_sum;
                    const double ncc = cov / std::sqrt(t_var * w_var);
                    const float score = static_cast<float>(std::min(1.0, std::fabs(ncc)));
                    if (score >= kGlyphThreshold) {
                        hits.push_back({ch, r + s, c + s, s, score});  // unpadded glyph box
                    }
                }
            }
        }
    }

    // Highest score wins any overlap; order is made deterministic before the
    // greedy pass.
    std::sort(hits.begin(), hits.end(), [](const GlyphHit& a, const GlyphHit& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.row != b.row) return a.row < b.row;
        if (a.col != b.col) return a.col < b.col;
        if (a.scale != b.scale) return a.scale < b.scale;
        return a.ch < b.ch;
    });
    std::vector<GlyphHit> kept;
    for (const GlyphHit& hit : hits) {
        bool blocked = false;
        for (const GlyphHit& k : kept) {
            if (rects_intersect(hit, k)) {
                blocked = true;
                break;
            }
        }
        if (!blocked) kept.push_back(hit);
    }

    // Row bands, then left-to-right adjacency within a band.
    std::sort(kept.begin(), kept.end(), [](const GlyphHit& a, const GlyphHit& b) {
        const int ac = 2 * a.row + a.height(), bc = 2 * b.row + b.height();
        if (ac != bc) return ac < bc;
        return a.col < b.col;
    });
    std::vector<std::vector<GlyphHit>> bands;
    for (const GlyphHit& g : kept) {
        if (!bands.empty()) {
            const GlyphHit& ref = bands.back().front();
            const double dc = (2.0 * g.row + g.height()) / 2.0 -
                              (2.0 * ref.row + ref.height()) / 2.0;
            if (std::fabs(dc) <= (g.height() + ref.height()) / 4.0) {
                bands.back().push_back(g);
                continue;
            }
        }
        bands.push_back({g});
    }

    std::vector<WordDetection> words;
    for (auto& band : bands) {
        std::sort(band.begin(), band.end(),
                  [](const GlyphHit& a, const GlyphHit& b) { return a.col < b.col; });
        std::size_t start = 0;
        while (start < band.size()) {
            std::size_t stop = start + 1;
            while (stop < band.size()) {
                const GlyphHit& prev = band[stop - 1];
                const GlyphHit& cur = band[stop];
                const int gap = cur.col - (prev.col + prev.width());
                if (gap > 2 * std::max(prev.scale, cur.scale)) break;
                ++stop;
            }
            WordDetection word;
            int r0 = band[start].row, c0 = band[start].col;
            int r1 = r0 + band[start].height(), c1 = c0 + band[start].width();
            word.score = 1.0f;
            for (std::size_t i = start; i < stop; ++i) {
                word.word.push_back(band[i].ch);
                word.score = std::min(word.score, band[i].score);
                r0 = std::min(r0, band[i].row);
                c0 = std::min(c0, band[i].col);
                r1 = std::max(r1, band[i].row + band[i].height());
                c1 = std::max(c1, band[i].col + band[i].width());
            }
            word.region = {r0, c0, r1 - r0, c1 - c0};
            words.push_back(std::move(word));
            start = stop;
        }
    }
    std::sort(words.begin(), words.end(), [](const WordDetection& a, const WordDetection& b) {
        if (a.region.row != b.region.row) return a.region.row < b.region.row;
        return a.region.col < b.region.col;
    });
    return words;
}

namespace {

std::string normalize_token(const std::string& raw) {
    std::size_t begin = 0, end = raw.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(raw[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(raw[end - 1]))) --end;
    std::string out = raw.substr(begin, end - begin);
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::vector<WordLabelEntry> build_word_label_map() {
    std::vector<WordLabelEntry> entries;
    for (const SignClass& sc : sign_classes()) {
        if (!sc.has_text) continue;
        WordLabelEntry entry;
        entry.class_id = sc.id;
        for (const std::string& word : sc.words) entry.tokens.push_back(normalize_token(word));
        entries.push_back(std::move(entry));
    }
    for (const WordLabelEntry& a : entries) {
        for (const WordLabelEntry& b : entries) {
            if (a.class_id == b.class_id) continue;
            const std::set<std::string> bt(b.tokens.begin(), b.tokens.end());
            bool subset = true;
            for (const std::string& t : a.tokens) {
                if (bt.count(t) == 0) {
                    subset = false;
                    break;
                }
            }
            if (subset) {
                throw Error("word label map: token set of class " + std::to_string(a.class_id) +
                            " subsumed by class " + std::to_string(b.class_id));
            }
        }
    }
    return entries;
}

}  // namespace

const std::vector<WordLabelEntry>& word_label_map() {
    static const std::vector<WordLabelEntry> entries = build_word_label_map();
    return entries;
}

std::optional<int> map_to_label(const std::vector<std::string>& words) {
    std::set<std::string> have;
    for (const std::string& word : words) {
        const std::string token = normalize_token(word);
        if (!token.empty()) have.insert(token);
    }
    std::optional<int> found;
    for (const WordLabelEntry& entry : word_label_map()) {
        bool all = true;
        for (const std::string& t : entry.tokens) {
            if (have.count(t) == 0) {
                all = false;
                break;
            }
        }
        if (!all) continue;
        if (found.has_value()) return std::nullopt;  // ambiguous: trust nothing
        found = entry.class_id;
    }
    return found;
}

std::optional<int> feature_label(const Tensor& x) {
    std::vector<std::string> words;
    for (const WordDetection& d : detect_text(x)) words.push_back(d.word);
    return map_to_label(words);
}

}  // namespace signshield

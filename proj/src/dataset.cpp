#include "signshield/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <cctype>
#include <cstdio>
#include <map>

#include "signshield/errors.hpp"
#include "signshield/font.hpp"
#include "signshield/ppm.hpp"

namespace fs = std::filesystem;

namespace signshield {

const std::vector<SignClass>& sign_classes() {
    static const std::vector<SignClass> classes = {
        {0, "curve left", false, {}},
        {1, "curve right", false, {}},
        {2, "do not enter", true, {"DO", "NOT", "ENTER"}},
        {3, "lane ends", false, {}},
        {4, "merge", false, {}},
        {5, "pedestrian crossing", false, {}},
        {6, "roundabout", false, {}},
        {7, "school zone", true, {"SCHOOL"}},
        {8, "signal ahead", false, {}},
        {9, "speed limit 15", true, {"SPEED", "LIMIT", "15"}},
        {10, "speed limit 30", true, {"SPEED", "LIMIT", "30"}},
        {11, "speed limit 35", true, {"SPEED", "LIMIT", "35"}},
        {12, "speed limit 45", true, {"SPEED", "LIMIT", "45"}},
        {13, "speed limit 55", true, {"SPEED", "LIMIT", "55"}},
        {14, "speed limit 65", true, {"SPEED", "LIMIT", "65"}},
        {15, "stop", true, {"STOP"}},
        {16, "stop ahead", false, {}},
        {17, "yield", true, {"YIELD"}},
    };
    return classes;
}

int class_id_by_name(const std::string& name) {
    std::string norm = name;
    for (char& c : norm) {
        if (c == '_') c = ' ';
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    for (const SignClass& sc : sign_classes()) {
        if (sc.name == norm) return sc.id;
    }
    throw LabelError("unknown sign class '" + name + "'");
}

namespace {

using Color = std::array<float, 3>;

constexpr Color kYellow = {0.93f, 0.78f, 0.10f};
constexpr Color kRed = {0.72f, 0.07f, 0.07f};
constexpr Color kDarkRed = {0.45f, 0.04f, 0.04f};
constexpr Color kWhite = {0.96f, 0.96f, 0.96f};
constexpr Color kBlack = {0.06f, 0.06f, 0.06f};

// Draws in a 64-unit reference frame scaled by `f` and shifted by the
// per-image jitter offset, so layouts are written once for any extent.
struct Painter {
    Tensor& img;
    double f;
    int dr, dc;

    int tr(double v) const { return static_cast<int>(std::lround(v * f)) + dr; }
    int tc(double v) const { return static_cast<int>(std::lround(v * f)) + dc; }

    void set(int r, int c, const Color& col) {
        if (r < 0 || r >= img.height() || c < 0 || c >= img.width()) return;
        for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = col[ch];
    }

    void fill_rect(double r0, double c0, double r1, double c1, const Color& col) {
        for (int r = tr(r0); r < tr(r1); ++r) {
            for (int c = tc(c0); c < tc(c1); ++c) set(r, c, col);
        }
    }

    void fill_circle(double cr, double cc, double rad, const Color& col) {
        const double pr = cr * f + dr, pc = cc * f + dc, prad = rad * f;
        for (int r = static_cast<int>(pr - prad) - 1; r <= static_cast<int>(pr + prad) + 1; ++r) {
            for (int c = static_cast<int>(pc - prad) - 1; c <= static_cast<int>(pc + prad) + 1;
                 ++c) {
                const double dy = r - pr, dx = c - pc;
                if (dy * dy + dx * dx <= prad * prad) set(r, c, col);
            }
        }
    }

    void fill_diamond(double cr, double cc, double rad, const Color& col) {
        const double pr = cr * f + dr, pc = cc * f + dc, prad = rad * f;
        for (int r = static_cast<int>(pr - prad) - 1; r <= static_cast<int>(pr + prad) + 1; ++r) {
            for (int c = static_cast<int>(pc - prad) - 1; c <= static_cast<int>(pc + prad) + 1;
                 ++c) {
                if (std::fabs(r - pr) + std::fabs(c - pc) <= prad) set(r, c, col);
            }
        }
    }

    void fill_octagon(double cr, double cc, double rad, const Color& col) {
        const double pr = cr * f + dr, pc = cc * f + dc, prad = rad * f;
        for (int r = static_cast<int>(pr - prad) - 1; r <= static_cast<int>(pr + prad) + 1; ++r) {
            for (int c = static_cast<int>(pc - prad) - 1; c <= static_cast<int>(pc + prad) + 1;
                 ++c) {
                const double ay = std::fabs(r - pr), ax = std::fabs(c - pc);
                if (ay <= prad && ax <= prad && ay + ax <= prad * 1.40) set(r, c, col);
            }
        }
    }

    // Downward-pointing triangle: top edge at r_top spanning cc +- halfw,
    // apex at (r_apex, cc).
    void fill_tri_down(double r_top, double r_apex, double cc, double halfw, const Color& col) {
        const double pt = r_top * f + dr, pa = r_apex * f + dr, pc = cc * f + dc,
                     ph = halfw * f;
        for (int r = static_cast<int>(pt); r <= static_cast<int>(pa) + 1; ++r) {
            if (r < pt || r > pa) continue;
            const double w = ph * (pa - r) / (pa - pt);
            for (int c = static_cast<int>(pc - w) - 1; c <= static_cast<int>(pc + w) + 1; ++c) {
                if (std::fabs(c - pc) <= w) set(r, c, col);
            }
        }
    }

    // Upward-pointing house pentagon: apex, then rectangle body.
    void fill_pentagon(double r_apex, double r_mid, double r_bot, double c0, double c1,
                       const Color& col) {
        fill_rect(r_mid, c0, r_bot, c1, col);
        const double pa = r_apex * f + dr, pm = r_mid * f + dr;
        const double pc0 = c0 * f + dc, pc1 = c1 * f + dc, pcm = (pc0 + pc1) / 2;
        for (int r = static_cast<int>(pa); r <= static_cast<int>(pm); ++r) {
            if (r < pa) continue;
            const double w = (pc1 - pc0) / 2 * (r - pa) / (pm - pa);
            for (int c = static_cast<int>(pcm - w) - 1; c <= static_cast<int>(pcm + w) + 1; ++c) {
                if (std::fabs(c - pcm) <= w) set(r, c, col);
            }
        }
    }

    void thick_line(double r0, double c0, double r1, double c1, double halfth,
                    const Color& col) {
        const double pr0 = r0 * f + dr, pc0 = c0 * f + dc;
        const double pr1 = r1 * f + dr, pc1 = c1 * f + dc, pth = halfth * f;
        const double len = std::hypot(pr1 - pr0, pc1 - pc0);
        const int steps = std::max(2, static_cast<int>(len * 2));
        for (int i = 0; i <= steps; ++i) {
            const double t = static_cast<double>(i) / steps;
            const double r = pr0 + t * (pr1 - pr0), c = pc0 + t * (pc1 - pc0);
            for (int rr = static_cast<int>(r - pth) - 1; rr <= static_cast<int>(r + pth) + 1;
                 ++rr) {
                for (int cc = static_cast<int>(c - pth) - 1; cc <= static_cast<int>(c + pth) + 1;
                     ++cc) {
                    if (std::hypot(rr - r, cc - c) <= pth) set(rr, cc, col);
                }
            }
        }
    }

    // Word centered at column cc (base units), top row r_top, glyph scale s.
    void word(const std::string& w, double r_top, double cc, int s, const Color& col) {
        const int width = word_width(w, s);
        draw_word(img, w, tr(r_top), tc(cc) - width / 2, s, col);
    }
};

void render_class(Painter& p, int class_id, int s) {
    switch (class_id) {
        case 0:  // curve left
            p.fill_diamond(32, 32, 26, kYellow);
            p.thick_line(44, 34, 30, 34, 2.2, kBlack);
            p.thick_line(30, 34, 22, 24, 2.2, kBlack);
            break;
        case 1:  // curve right
            p.fill_diamond(32, 32, 26, kYellow);
            p.thick_line(44, 30, 30, 30, 2.2, kBlack);
            p.thick_line(30, 30, 22, 40, 2.2, kBlack);
            break;
        case 2:  // do not enter
            p.fill_rect(8, 8, 56, 56, kWhite);
            p.fill_circle(22, 32, 11, kRed);
            p.fill_rect(19.5, 23, 24.5, 41, kWhite);
            p.word("DO", 36, 24, s, kBlack);
            p.word("NOT", 36, 41, s, kBlack);
            p.word("ENTER", 46, 32, s, kBlack);
            break;
        case 3:  // lane ends
            p.fill_diamond(32, 32, 26, kYellow);
            p.thick_line(44, 24, 20, 30, 2.0, kBlack);
            p.thick_line(44, 40, 20, 34, 2.0, kBlack);
            break;
        case 4:  // merge
            p.fill_diamond(32, 32, 26, kYellow);
            p.thick_line(44, 25, 32, 32, 2.0, kBlack);
            p.thick_line(44, 39, 32, 32, 2.0, kBlack);
            p.thick_line(32, 32, 20, 32, 2.0, kBlack);
            break;
        case 5:  // pedestrian crossing
            p.fill_diamond(32, 32, 26, kYellow);
            p.fill_circle(22, 32, 3.5, kBlack);
            p.thick_line(26, 32, 37, 32, 2.0, kBlack);
            p.thick_line(37, 32, 45, 27, 1.8, kBlack);
            p.thick_line(37, 32, 45, 37, 1.8, kBlack);
            break;
        case 6:  // roundabout
            p.fill_diamond(32, 32, 26, kYellow);
            p.fill_circle(32, 32, 11, kBlack);
            p.fill_circle(32, 32, 6, kYellow);
            break;
        case 7:  // school zone
            p.fill_pentagon(10, 26, 54, 12, 52, kYellow);
            p.word("SCHOOL", 34, 32, s, kBlack);
            break;
        case 8:  // signal ahead
            p.fill_diamond(32, 32, 26, kYellow);
            p.fill_rect(17, 26, 47, 38, kBlack);
            p.fill_circle(22, 32, 3.2, {0.85f, 0.10f, 0.10f});
            p.fill_circle(32, 32, 3.2, {0.95f, 0.70f, 0.10f});
            p.fill_circle(42, 32, 3.2, {0.10f, 0.75f, 0.20f});
            break;
        case 9:
        case 10:
        case 11:
        case 12:
        case 13:
        case 14: {  // speed limits
            p.fill_rect(6, 13, 58, 51, kBlack);
            p.fill_rect(8, 15, 56, 49, kWhite);
            p.word("SPEED", 12, 32, s, kBlack);
            p.word("LIMIT", 22, 32, s, kBlack);
            const std::string digits = sign_classes()[class_id].words.back();
            p.word(digits, 33, 32, 2 * s, kBlack);
            break;
        }
        case 15:  // stop
            p.fill_octagon(32, 32, 27, kRed);
            p.word("STOP", 28, 32, s, kWhite);
            break;
        case 16:  // stop ahead
            p.fill_diamond(32, 32, 26, kYellow);
            p.fill_octagon(26, 32, 9, kRed);
            p.thick_line(35, 32, 46, 32, 1.6, kBlack);
            break;
        case 17:  // yield
            p.fill_tri_down(10, 54, 32, 26, kRed);
            p.fill_tri_down(13, 51, 32, 24, kWhite);
            p.word("YIELD", 20, 32, s, kDarkRed);
            break;
        default:
            throw LabelError("render_sign: class id out of range");
    }
}

}  // namespace

Tensor render_sign(int class_id, int extent, Rng& rng) {
    if (class_id < 0 || class_id >= 18) {
        throw LabelError("render_sign: class id out of range");
    }
    if (extent < 48) {
        throw ParamError("render_sign: extent must be >= 48 to fit glyphs");
    }
    Tensor img = Tensor::zeros({extent, extent, 3});

    // Jitter draws happen in a fixed order so images are seed-stable.
    const Color bg = {rng.uniform(0.30f, 0.60f), rng.uniform(0.35f, 0.62f),
                      rng.uniform(0.30f, 0.60f)};
    const int max_off = extent / 10;
    const int dr = static_cast<int>(rng.uniform_int(2 * max_off + 1)) - max_off;
    const int dc = static_cast<int>(rng.uniform_int(2 * max_off + 1)) - max_off;
    const float brightness = rng.uniform(-0.1f, 0.1f);
    const Color gain = {rng.uniform(0.92f, 1.08f), rng.uniform(0.92f, 1.08f),
                        rng.uniform(0.92f, 1.08f)};

    for (int r = 0; r < extent; ++r) {
        for (int c = 0; c < extent; ++c) {
            for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = bg[ch];
        }
    }
    Painter p{img, static_cast<double>(extent) / 64.0, dr, dc};
    const int s = std::max(1, extent / 64);
    render_class(p, class_id, s);

    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const float g = gain[i % 3];
        const float v = img.data[i] * g + brightness + rng.normal(0.0f, 0.02f);
        img.data[i] = std::clamp(v, 0.0f, 1.0f);
    }
    return img;
}

std::vector<LabeledImage> generate_synthetic(std::uint64_t seed, int per_class, int extent) {
    if (per_class < 1) {
        throw ParamError("generate_synthetic: per_class must be >= 1");
    }
    if (extent < 48) {
        throw ParamError("generate_synthetic: extent must be >= 48");
    }
    Rng master(seed);
    std::vector<LabeledImage> out;
    out.reserve(static_cast<std::size_t>(per_class) * 18);
    for (int cls = 0; cls < 18; ++cls) {
        for (int k = 0; k < per_class; ++k) {
            Rng stream = master.child(static_cast<std::uint64_t>(cls) * per_class + k);
            out.push_back({render_sign(cls, extent, stream), cls});
        }
    }
    return out;
}

std::vector<LabeledImage> load_directory(const std::string& root, int extent) {
    if (!fs::is_directory(root)) {
        throw IoError(root + ": not a directory");
    }
    std::vector<std::pair<int, std::string>> files;  // (label, path)
    for (const fs::directory_entry& dir : fs::directory_iterator(root)) {
        if (!dir.is_directory()) continue;
        const int label = class_id_by_name(dir.path().filename().string());
        for (const fs::directory_entry& f : fs::directory_iterator(dir.path())) {
            if (f.is_regular_file()) {
                files.emplace_back(label, f.path().string());
            }
        }
    }
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    std::vector<LabeledImage> out;
    out.reserve(files.size());
    for (const auto& [label, path] : files) {
        Tensor img = read_ppm(path);
        out.push_back({bilinear_resize(img, extent, extent), label});
    }
    return out;
}

void save_dataset(const std::string& root, const std::vector<LabeledImage>& images) {
    std::map<int, int> counters;
    for (const LabeledImage& im : images) {
        if (im.label < 0 || im.label >= 18) {
            throw LabelError("save_dataset: label out of range");
        }
        std::string dir_name = sign_classes()[im.label].name;
        std::replace(dir_name.begin(), dir_name.end(), ' ', '_');
        const fs::path dir = fs::path(root) / dir_name;
        fs::create_directories(dir);
        char name[16];
        std::snprintf(name, sizeof(name), "%04d.ppm", counters[im.label]++);
        write_ppm((dir / name).string(), im.image);
    }
}

DatasetSplit split(const std::vector<LabeledImage>& images, double train_fraction,
                   std::uint64_t seed) {
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) {
        throw ParamError("split: train_fraction must be in (0,1)");
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const int label = images[i].label;
        if (label < 0 || label >= 18) {
            throw LabelError("split: label out of range");
        }
        by_class[label].push_back(i);
    }
    Rng master(seed);
    DatasetSplit out;
    out.seed = seed;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2) {
            throw DataError("split: class '" + sign_classes()[label].name +
                            "' needs at least 2 images to stratify");
        }
        Rng stream = master.child(static_cast<std::uint64_t>(label));
        for (std::size_t i = idx.size(); i > 1; --i) {  // Fisher-Yates
            std::swap(idx[i - 1], idx[stream.uniform_int(i)]);
        }
        std::size_t n_train = static_cast<std::size_t>(
            std::floor(train_fraction * static_cast<double>(idx.size())));
        n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < n_train ? out.train : out.test).push_back(images[idx[i]]);
        }
    }
    return out;
}

}  // namespace signshield

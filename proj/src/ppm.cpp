#include "signshield/ppm.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "signshield/errors.hpp"

namespace signshield {

namespace {

// Next whitespace/comment-delimited token in a PPM header.
std::string next_token(std::istream& in, const std::string& path) {
    std::string tok;
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = in.get();
    }
    while (ch != EOF && !std::isspace(ch)) {
        tok.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    if (tok.empty()) {
        throw FormatError(path + ": truncated PPM header");
    }
    return tok;
}

int parse_int(const std::string& tok, const std::string& path, const char* what) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw FormatError(path + ": bad " + what + " '" + tok + "'");
    }
}

}  // namespace

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(path + ": cannot open for reading");
    }
    const std::string magic = next_token(in, path);
    if (magic != "P6") {
        throw FormatError(path + ": expected P6 magic, got '" + magic + "'");
    }
    const int w = parse_int(next_token(in, path), path, "width");
    const int h = parse_int(next_token(in, path), path, "height");
    const int maxval = parse_int(next_token(in, path), path, "maxval");
    if (w < 1 || h < 1) {
        throw FormatError(path + ": non-positive image extents");
    }
    if (maxval < 1 || maxval > 255) {
        throw FormatError(path + ": unsupported maxval " + std::to_string(maxval));
    }
    // The token reader consumed the single whitespace after maxval already.
    const std::size_t n = static_cast<std::size_t>(w) * h * 3;
    std::vector<std::uint8_t> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw FormatError(path + ": truncated pixel data (expected " + std::to_string(n) +
                          " bytes, got " + std::to_string(in.gcount()) + ")");
    }
    Tensor img = Tensor::zeros({h, w, 3});
    // Direct division keeps byte/255 bit-identical with values built as i/255.
    const float mv = static_cast<float>(maxval);
    for (std::size_t i = 0; i < n; ++i) {
        img.data[i] = static_cast<float>(raw[i]) / mv;
    }
    return img;
}

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.channels() != 3) {
        throw ShapeError("write_ppm: expected {H,W,3} tensor, got " +
                         shape_to_string(image.shape));
    }
    require_finite(image, "write_ppm input");
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError(path + ": cannot open for writing");
    }
    out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
    std::vector<std::uint8_t> raw;
    raw.reserve(image.data.size());
    for (float v : image.data) {
        const float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        raw.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0f)));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) {
        throw IoError(path + ": write failed");
    }
}

}  // namespace signshield

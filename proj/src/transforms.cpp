#include "signshield/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "signshield/errors.hpp"

namespace signshield {

const std::array<int, 64> kJpegBaseTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99,
};

std::array<int, 64> jpeg_quant_table(int quality) {
    if (quality < 1 || quality > 100) {
        throw ParamError("jpeg_quant_table: quality must be in [1,100], got " +
                         std::to_string(quality));
    }
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<int, 64> out{};
    for (int i = 0; i < 64; ++i) {
        const int v = static_cast<int>(
            std::lround(static_cast<double>(kJpegBaseTable[i]) * scale / 100.0));
        out[i] = std::clamp(v, 1, 255);
    }
    return out;
}

Tensor random_crop_resize(const Tensor& x, float fraction, Rng& rng) {
    if (x.rank() != 3) {
        throw ShapeError("random_crop_resize: expected rank-3 tensor, got " +
                         shape_to_string(x.shape));
    }
    if (!(fraction > 0.0f) || fraction > 1.0f) {
        throw ParamError("random_crop_resize: fraction must be in (0,1]");
    }
    const int h = x.height(), w = x.width();
    const int ch = static_cast<int>(std::floor(static_cast<double>(fraction) * h));
    const int cw = static_cast<int>(std::floor(static_cast<double>(fraction) * w));
    if (ch < 1 || cw < 1) {
        throw ParamError("random_crop_resize: fraction yields an empty crop");
    }
    const int r0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - ch + 1)));
    const int c0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - cw + 1)));
    if (ch == h && cw == w) {
        return x;
    }
    return bilinear_resize(crop(x, r0, c0, ch, cw), h, w);
}

Tensor bit_squeeze(const Tensor& x, int bits) {
    if (bits < 1 || bits > 8) {
        throw ParamError("bit_squeeze: bits must be in [1,8], got " + std::to_string(bits));
    }
    const float levels = static_cast<float>((1 << bits) - 1);
    Tensor out = Tensor::zeros(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const float v = std::clamp(x.data[i], 0.0f, 1.0f);
        out.data[i] = std::round(v * levels) / levels;
    }
    return out;
}

Tensor binary_filter(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        out.data[i] = x.data[i] >= 0.5f ? 1.0f : 0.0f;
    }
    return out;
}

namespace {

// Orthonormal 8-point DCT-II matrix, computed once.
struct DctBasis {
    double m[8][8];
    DctBasis() {
        const double pi = 3.14159265358979323846;
        for (int u = 0; u < 8; ++u) {
            const double s = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x) {
                m[u][x] = s * std::cos((2 * x + 1) * u * pi / 16.0);
            }
        }
    }
};

const DctBasis kDct;

}  // namespace

Tensor dct_quantize(const Tensor& x, int quality) {
    if (x.rank() != 3) {
        throw ShapeError("dct_quantize: expected rank-3 tensor, got " + shape_to_string(x.shape));
    }
    const std::array<int, 64> q = jpeg_quant_table(quality);
    const int h = x.height(), w = x.width(), nch = x.channels();
    const int ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;

    Tensor out = Tensor::zeros(x.shape);
    std::vector<double> plane(static_cast<std::size_t>(ph) * pw);
    for (int c = 0; c < nch; ++c) {
        // Level shift with edge replication into the padded plane.
        for (int r = 0; r < ph; ++r) {
            const int sr = std::min(r, h - 1);
            for (int cc = 0; cc < pw; ++cc) {
                const int sc = std::min(cc, w - 1);
                plane[static_cast<std::size_t>(r) * pw + cc] =
                    static_cast<double>(x.at(sr, sc, c)) * 255.0 - 128.0;
            }
        }
        for (int br = 0; br < ph; br += 8) {
            for (int bc = 0; bc < pw; bc += 8) {
                double blk[8][8], tmp[8][8], coef[8][8];
                for (int r = 0; r < 8; ++r) {
                    for (int cc = 0; cc < 8; ++cc) {
                        blk[r][cc] = plane[static_cast<std::size_t>(br + r) * pw + bc + cc];
                    }
                }
                // coef = D * blk * D^T
                for (int u = 0; u < 8; ++u) {
                    for (int cc = 0; cc < 8; ++cc) {
                        double s = 0.0;
                        for (int r = 0; r < 8; ++r) s += kDct.m[u][r] * blk[r][cc];
                        tmp[u][cc] = s;
                    }
                }
                for (int u = 0; u < 8; ++u) {
                    for (int v = 0; v < 8; ++v) {
                        double s = 0.0;
                        for (int cc = 0; cc < 8; ++cc) s += tmp[u][cc] * kDct.m[v][cc];
                        const double step = static_cast<double>(q[u * 8 + v]);
                        coef[u][v] = std::round(s / step) * step;
                    }
                }
                // blk = D^T * coef * D
                for (int r = 0; r < 8; ++r) {
                    for (int v = 0; v < 8; ++v) {
                        double s = 0.0;
                        for (int u = 0; u < 8; ++u) s += kDct.m[u][r] * coef[u][v];
                        tmp[r][v] = s;
                    }
                }
                for (int r = 0; r < 8; ++r) {
                    for (int cc = 0; cc < 8; ++cc) {
                        double s = 0.0;
                        for (int v = 0; v < 8; ++v) s += tmp[r][v] * kDct.m[v][cc];
                        plane[static_cast<std::size_t>(br + r) * pw + bc + cc] = s;
                    }
                }
            }
        }
        for (int r = 0; r < h; ++r) {
            for (int cc = 0; cc < w; ++cc) {
                const double v = (plane[static_cast<std::size_t>(r) * pw + cc] + 128.0) / 255.0;
                out.at(r, cc, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

}  // namespace signshield

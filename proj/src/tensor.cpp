#include "signshield/tensor.hpp"

#include <cmath>
#include <sstream>

#include "signshield/errors.hpp"

namespace signshield {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e < 0) {
            throw ShapeError("negative extent in shape " + shape_to_string(shape));
        }
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "}";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

float& Tensor::at(int r, int c, int ch) {
    return data[(static_cast<std::size_t>(r) * shape[1] + c) * shape[2] + ch];
}

float Tensor::at(int r, int c, int ch) const {
    return data[(static_cast<std::size_t>(r) * shape[1] + c) * shape[2] + ch];
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

void require_shape(const Tensor& t, const std::vector<int>& shape, const char* what) {
    if (t.shape != shape) {
        throw ShapeError(std::string(what) + ": expected shape " + shape_to_string(shape) +
                         ", got " + shape_to_string(t.shape));
    }
}

void require_finite(const Tensor& t, const char* what) {
    for (float v : t.data) {
        if (!std::isfinite(v)) {
            throw ShapeError(std::string(what) + ": tensor contains a non-finite value");
        }
    }
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) {
        throw ShapeError("max_abs_diff: shape mismatch " + shape_to_string(a.shape) + " vs " +
                         shape_to_string(b.shape));
    }
    float m = 0.0f;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    }
    return m;
}

float l2_norm(const Tensor& a) {
    double s = 0.0;
    for (float v : a.data) {
        s += static_cast<double>(v) * static_cast<double>(v);
    }
    return static_cast<float>(std::sqrt(s));
}

Tensor crop(const Tensor& x, int r0, int c0, int h, int w) {
    if (x.rank() != 3) {
        throw ShapeError("crop: expected rank-3 tensor, got " + shape_to_string(x.shape));
    }
    if (r0 < 0 || c0 < 0 || h < 1 || w < 1 || r0 + h > x.height() || c0 + w > x.width()) {
        throw ParamError("crop: window out of bounds");
    }
    Tensor out = Tensor::zeros({h, w, x.channels()});
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            for (int ch = 0; ch < x.channels(); ++ch) {
                out.at(r, c, ch) = x.at(r0 + r, c0 + c, ch);
            }
        }
    }
    return out;
}

namespace {

// Corner-aligned source position for output index i.
inline float src_pos(int i, int src, int dst) {
    if (dst <= 1 || src <= 1) return 0.0f;
    return static_cast<float>(i) * static_cast<float>(src - 1) / static_cast<float>(dst - 1);
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
    if (x.rank() != 3) {
        throw ShapeError("bilinear_resize: expected rank-3 tensor, got " + shape_to_string(x.shape));
    }
    if (out_h < 1 || out_w < 1) {
        throw ParamError("bilinear_resize: output extent must be >= 1");
    }
    const int sh = x.height(), sw = x.width(), ch = x.channels();
    if (sh == out_h && sw == out_w) {
        return x;
    }
    Tensor out = Tensor::zeros({out_h, out_w, ch});
    for (int r = 0; r < out_h; ++r) {
        const float fr = src_pos(r, sh, out_h);
        const int r0 = static_cast<int>(fr);
        const int r1 = std::min(r0 + 1, sh - 1);
        const float wr = fr - static_cast<float>(r0);
        for (int c = 0; c < out_w; ++c) {
            const float fc = src_pos(c, sw, out_w);
            const int c0 = static_cast<int>(fc);
            const int c1 = std::min(c0 + 1, sw - 1);
            const float wc = fc - static_cast<float>(c0);
            for (int k = 0; k < ch; ++k) {
                const float top = x.at(r0, c0, k) * (1.0f - wc) + x.at(r0, c1, k) * wc;
                const float bot = x.at(r1, c0, k) * (1.0f - wc) + x.at(r1, c1, k) * wc;
                out.at(r, c, k) = top * (1.0f - wr) + bot * wr;
            }
        }
    }
    return out;
}

}  // namespace signshield

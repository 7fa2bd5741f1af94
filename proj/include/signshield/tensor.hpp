#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace signshield {

/// Dense row-major tensor of 32-bit floats.
///
/// Images are stored channel-last as {H, W, C} with intensities in [0, 1].
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<float> data_);

    static Tensor zeros(std::vector<int> shape);

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    int rank() const { return static_cast<int>(shape.size()); }

    float& at(int i) { return data[static_cast<std::size_t>(i)]; }
    float at(int i) const { return data[static_cast<std::size_t>(i)]; }
    float& at(int r, int c, int ch);
    float at(int r, int c, int ch) const;

    /// Height/width/channels accessors; require rank 3.
    int height() const { return shape[0]; }
    int width() const { return shape[1]; }
    int channels() const { return shape[2]; }
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

/// Throws ShapeError unless t.shape == shape.
void require_shape(const Tensor& t, const std::vector<int>& shape, const char* what);

/// Throws ShapeError if any element is NaN or infinite.
void require_finite(const Tensor& t, const char* what);

float max_abs_diff(const Tensor& a, const Tensor& b);
float l2_norm(const Tensor& a);

/// Bilinear resample with corner-aligned sampling. Rank-3 {H,W,C} only.
/// Resizing to the source extent reproduces the input bit-for-bit.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

/// Copy of the window starting at (r0, c0) with extent (h, w).
Tensor crop(const Tensor& x, int r0, int c0, int h, int w);

}  // namespace signshield

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "signshield/rng.hpp"
#include "signshield/tensor.hpp"

namespace signshield {

enum class LayerKind { Conv2d, MaxPool2d, Relu, Flatten, Dense, ResidualAdd };

/// One layer of a feed-forward network. Only the fields relevant to `kind`
/// are read; the rest stay at their defaults.
struct LayerSpec {
    LayerKind kind;
    int kernel = 0;        // conv2d / maxpool2d window extent
    int stride = 1;        // conv2d / maxpool2d
    int padding = 0;       // conv2d zero padding
    int out_channels = 0;  // conv2d
    int units = 0;         // dense
    int skip_source = -2;  // residual-add: earlier layer index, -1 = network input

    static LayerSpec conv2d(int kernel, int out_channels, int stride = 1, int padding = 0);
    static LayerSpec maxpool2d(int kernel, int stride);
    static LayerSpec relu();
    static LayerSpec flatten();
    static LayerSpec dense(int units);
    static LayerSpec residual_add(int skip_source);
};

/// Kernel + bias for layers that carry parameters; empty tensors otherwise.
struct LayerWeights {
    Tensor kernel;
    Tensor bias;
};

/// A validated sequence of layers plus their weights.
///
/// Conv kernels are stored {k, k, in_ch, out_ch}, dense kernels {in, units},
/// activations channel-last. Forward and backward passes are pure functions
/// of (network, input); nothing here mutates shared state.
struct Network {
    std::vector<int> input_shape;  // {H, W, C}
    std::vector<LayerSpec> layers;
    std::vector<LayerWeights> weights;  // parallel to layers
};

struct LossGradient {
    float loss = 0.0f;
    Tensor grad_input;
};

/// Loss, input gradient, and per-layer weight gradients for one sample.
struct BackpropResult {
    float loss = 0.0f;
    Tensor grad_input;
    std::vector<LayerWeights> grad_weights;
};

/// Per-layer output shapes; validates that layers chain consistently.
/// Element i is the output shape of layer i.
std::vector<std::vector<int>> layer_output_shapes(const std::vector<int>& input_shape,
                                                  const std::vector<LayerSpec>& layers);

/// Allocates zero weights of the correct extents for every layer.
std::vector<LayerWeights> make_zero_weights(const std::vector<int>& input_shape,
                                            const std::vector<LayerSpec>& layers);

/// Glorot-uniform initialization from the given stream, biases zero.
void init_weights(Network& net, Rng& rng);

Tensor forward(const Network& net, const Tensor& x);

/// Softmax cross-entropy of `logits` against class `y`:
/// loss = -log(softmax(logits)[y]), gradient = softmax - onehot.
std::pair<float, Tensor> softmax_cross_entropy(const Tensor& logits, int y);

Tensor softmax(const Tensor& logits);

/// Exact analytic gradient of the cross-entropy loss w.r.t. the input.
LossGradient loss_and_input_gradient(const Network& net, const Tensor& x, int y);

/// Full backward pass; weight gradients are skipped when not requested.
BackpropResult backprop(const Network& net, const Tensor& x, int y, bool want_weight_grads);

/// Input gradient of <upstream, logits(x)> — the vector-Jacobian product at
/// the logits. Used for logit-margin objectives.
Tensor logit_vjp(const Network& net, const Tensor& x, const Tensor& upstream);

/// w -= lr * grad for every parameter tensor.
void sgd_step(Network& net, const std::vector<LayerWeights>& grads, float lr);

/// Central finite difference of an arbitrary scalar function, element-wise:
/// out[e] = (f(x + h*e) - f(x - h*e)) / (2h).
Tensor central_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, float h);

/// Central finite difference of the cross-entropy loss w.r.t. the input.
/// The forward evaluation runs in double precision so the estimate is
/// accurate enough to serve as an oracle for the float32 analytic path.
Tensor finite_difference_gradient(const Network& net, const Tensor& x, int y, float h);

/// Double-precision mirror of forward + cross-entropy loss.
double loss_value_f64(const Network& net, const std::vector<double>& x, int y);

}  // namespace signshield

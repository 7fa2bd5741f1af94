#include "signshield/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "signshield/errors.hpp"

namespace signshield {

LayerSpec LayerSpec::conv2d(int kernel, int out_channels, int stride, int padding) {
    LayerSpec s{LayerKind::Conv2d};
    s.kernel = kernel;
    s.out_channels = out_channels;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::maxpool2d(int kernel, int stride) {
    LayerSpec s{LayerKind::MaxPool2d};
    s.kernel = kernel;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{LayerKind::Relu}; }
LayerSpec LayerSpec::flatten() { return LayerSpec{LayerKind::Flatten}; }

LayerSpec LayerSpec::dense(int units) {
    LayerSpec s{LayerKind::Dense};
    s.units = units;
    return s;
}

LayerSpec LayerSpec::residual_add(int skip_source) {
    LayerSpec s{LayerKind::ResidualAdd};
    s.skip_source = skip_source;
    return s;
}

std::vector<std::vector<int>> layer_output_shapes(const std::vector<int>& input_shape,
                                                  const std::vector<LayerSpec>& layers) {
    std::vector<std::vector<int>> shapes;
    shapes.reserve(layers.size());
    std::vector<int> cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const std::string where = "layer " + std::to_string(i);
        switch (l.kind) {
            case LayerKind::Conv2d: {
                if (l.kernel < 1 || l.stride < 1 || l.padding < 0 || l.out_channels < 1) {
                    throw ParamError(where + ": conv2d requires kernel >= 1, stride >= 1");
                }
                if (cur.size() != 3) {
                    throw ShapeError(where + ": conv2d needs a rank-3 input, got " +
                                     shape_to_string(cur));
                }
                const int oh = (cur[0] + 2 * l.padding - l.kernel) / l.stride + 1;
                const int ow = (cur[1] + 2 * l.padding - l.kernel) / l.stride + 1;
                if (oh < 1 || ow < 1) {
                    throw ShapeError(where + ": conv2d window larger than padded input");
                }
                cur = {oh, ow, l.out_channels};
                break;
            }
            case LayerKind::MaxPool2d: {
                if (l.kernel < 1 || l.stride < 1) {
                    throw ParamError(where + ": maxpool2d requires kernel >= 1, stride >= 1");
                }
                if (cur.size() != 3) {
                    throw ShapeError(where + ": maxpool2d needs a rank-3 input, got " +
                                     shape_to_string(cur));
                }
                const int oh = (cur[0] - l.kernel) / l.stride + 1;
                const int ow = (cur[1] - l.kernel) / l.stride + 1;
                if (oh < 1 || ow < 1) {
                    throw ShapeError(where + ": maxpool2d window larger than input");
                }
                cur = {oh, ow, cur[2]};
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::Flatten: {
                cur = {static_cast<int>(shape_numel(cur))};
                break;
            }
            case LayerKind::Dense: {
                if (l.units < 1) {
                    throw ParamError(where + ": dense requires units >= 1");
                }
                if (cur.size() != 1) {
                    throw ShapeError(where + ": dense needs a rank-1 input, got " +
                                     shape_to_string(cur) + " (flatten first)");
                }
                cur = {l.units};
                break;
            }
            case LayerKind::ResidualAdd: {
                if (l.skip_source < -1 || l.skip_source >= static_cast<int>(i)) {
                    throw ParamError(where + ": residual-add skip source must be an earlier layer");
                }
                const std::vector<int>& src =
                    l.skip_source < 0 ? input_shape : shapes[static_cast<std::size_t>(l.skip_source)];
                if (src != cur) {
                    throw ShapeError(where + ": residual-add shape mismatch " + shape_to_string(src) +
                                     " vs " + shape_to_string(cur));
                }
                break;
            }
        }
        shapes.push_back(cur);
    }
    return shapes;
}

std::vector<LayerWeights> make_zero_weights(const std::vector<int>& input_shape,
                                            const std::vector<LayerSpec>& layers) {
    const auto shapes = layer_output_shapes(input_shape, layers);
    std::vector<LayerWeights> out(layers.size());
    std::vector<int> cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        if (l.kind == LayerKind::Conv2d) {
            out[i].kernel = Tensor::zeros({l.kernel, l.kernel, cur[2], l.out_channels});
            out[i].bias = Tensor::zeros({l.out_channels});
        } else if (l.kind == LayerKind::Dense) {
            out[i].kernel = Tensor::zeros({cur[0], l.units});
            out[i].bias = Tensor::zeros({l.units});
        }
        cur = shapes[i];
    }
    return out;
}

void init_weights(Network& net, Rng& rng) {
    if (net.weights.empty()) {
        net.weights = make_zero_weights(net.input_shape, net.layers);
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        LayerWeights& w = net.weights[i];
        if (w.kernel.empty()) continue;
        float fan_in = 0.0f, fan_out = 0.0f;
        if (l.kind == LayerKind::Conv2d) {
            const int k = l.kernel, ci = w.kernel.shape[2];
            fan_in = static_cast<float>(k * k * ci);
            fan_out = static_cast<float>(k * k * l.out_channels);
        } else {
            fan_in = static_cast<float>(w.kernel.shape[0]);
            fan_out = static_cast<float>(w.kernel.shape[1]);
        }
        const float limit = std::sqrt(6.0f / (fan_in + fan_out));
        for (float& v : w.kernel.data) {
            v = rng.uniform(-limit, limit);
        }
        std::fill(w.bias.data.begin(), w.bias.data.end(), 0.0f);
    }
}

namespace {

// Activations for every layer in scalar type T; weights promoted per element.
// acts[0] is the input, acts[i + 1] the output of layer i.
template <typename T>
std::vector<std::vector<T>> forward_all(const Network& net, std::vector<T> input,
                                        const std::vector<std::vector<int>>& shapes) {
    std::vector<std::vector<T>> acts;
    acts.reserve(net.layers.size() + 1);
    acts.push_back(std::move(input));

    std::vector<int> cur = net.input_shape;
    std::vector<T> acc;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        const std::vector<T>& in = acts.back();
        const std::vector<int>& osh = shapes[i];
        std::vector<T> out;
        switch (l.kind) {
            case LayerKind::Conv2d: {
                const int h = cur[0], w = cur[1], c = cur[2];
                const int oh_ = osh[0], ow_ = osh[1], oc = osh[2];
                const int k = l.kernel, s = l.stride, p = l.padding;
                const float* kw = net.weights[i].kernel.data.data();
                const float* bias = net.weights[i].bias.data.data();
                out.resize(static_cast<std::size_t>(oh_) * ow_ * oc);
                acc.assign(static_cast<std::size_t>(oc), T(0));
                for (int oh = 0; oh < oh_; ++oh) {
                    for (int ow = 0; ow < ow_; ++ow) {
                        for (int co = 0; co < oc; ++co) acc[co] = static_cast<T>(bias[co]);
                        for (int kh = 0; kh < k; ++kh) {
                            const int ih = oh * s - p + kh;
                            if (ih < 0 || ih >= h) continue;
                            for (int kw2 = 0; kw2 < k; ++kw2) {
                                const int iw = ow * s - p + kw2;
                                if (iw < 0 || iw >= w) continue;
                                const T* inp = &in[(static_cast<std::size_t>(ih) * w + iw) * c];
                                const float* kbase = kw + (static_cast<std::size_t>(kh) * k + kw2) * c * oc;
                                for (int ci = 0; ci < c; ++ci) {
                                    const T a = inp[ci];
                                    const float* krow = kbase + static_cast<std::size_t>(ci) * oc;
                                    for (int co = 0; co < oc; ++co) {
                                        acc[co] += a * static_cast<T>(krow[co]);
                                    }
                                }
                            }
                        }
                        T* op = &out[(static_cast<std::size_t>(oh) * ow_ + ow) * oc];
                        for (int co = 0; co < oc; ++co) op[co] = acc[co];
                    }
                }
                break;
            }
            case LayerKind::MaxPool2d: {
                const int h = cur[0], w = cur[1], c = cur[2];
                const int oh_ = osh[0], ow_ = osh[1];
                const int k = l.kernel, s = l.stride;
                out.resize(static_cast<std::size_t>(oh_) * ow_ * c);
                for (int oh = 0; oh < oh_; ++oh) {
                    for (int ow = 0; ow < ow_; ++ow) {
                        for (int ch = 0; ch < c; ++ch) {
                            T best = in[(static_cast<std::size_t>(oh * s) * w + ow * s) * c + ch];
                            for (int kh = 0; kh < k; ++kh) {
                                for (int kw2 = 0; kw2 < k; ++kw2) {
                                    const T v =
                                        in[(static_cast<std::size_t>(oh * s + kh) * w + ow * s + kw2) * c + ch];
                                    if (v > best) best = v;
                                }
                            }
                            out[(static_cast<std::size_t>(oh) * ow_ + ow) * c + ch] = best;
                        }
                    }
                }
                break;
            }
            case LayerKind::Relu: {
                out.resize(in.size());
                for (std::size_t e = 0; e < in.size(); ++e) out[e] = in[e] > T(0) ? in[e] : T(0);
                break;
            }
            case LayerKind::Flatten: {
                out = in;
                break;
            }
            case LayerKind::Dense: {
                const int n_in = cur[0], n_out = osh[0];
                const float* kw = net.weights[i].kernel.data.data();
                const float* bias = net.weights[i].bias.data.data();
                out.resize(static_cast<std::size_t>(n_out));
                for (int o = 0; o < n_out; ++o) out[o] = static_cast<T>(bias[o]);
                for (int e = 0; e < n_in; ++e) {
                    const T a = in[e];
                    const float* krow = kw + static_cast<std::size_t>(e) * n_out;
                    for (int o = 0; o < n_out; ++o) out[o] += a * static_cast<T>(krow[o]);
                }
                break;
            }
            case LayerKind::ResidualAdd: {
                const std::vector<T>& src = acts[static_cast<std::size_t>(l.skip_source + 1)];
                out.resize(in.size());
                for (std::size_t e = 0; e < in.size(); ++e) out[e] = in[e] + src[e];
                break;
            }
        }
        acts.push_back(std::move(out));
        cur = osh;
    }
    return acts;
}

Tensor backward_from_logits(const Network& net, const std::vector<Tensor>& acts,
                            const std::vector<std::vector<int>>& shapes, Tensor upstream,
                            std::vector<LayerWeights>* grad_weights) {
    const int n = static_cast<int>(net.layers.size());
    std::vector<Tensor> gacts(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i < n; ++i) gacts[i] = Tensor::zeros(acts[i].shape);
    gacts[n] = std::move(upstream);

    for (int i = n - 1; i >= 0; --i) {
        const LayerSpec& l = net.layers[i];
        const Tensor& g = gacts[i + 1];
        const Tensor& ain = acts[i];
        Tensor& gin = gacts[i];
        switch (l.kind) {
            case LayerKind::Conv2d: {
                const int h = ain.shape[0], w = ain.shape[1], c = ain.shape[2];
                const int oh_ = shapes[i][0], ow_ = shapes[i][1], oc = shapes[i][2];
                const int k = l.kernel, s = l.stride, p = l.padding;
                const float* kw = net.weights[i].kernel.data.data();
                float* gk = grad_weights ? (*grad_weights)[i].kernel.data.data() : nullptr;
                float* gb = grad_weights ? (*grad_weights)[i].bias.data.data() : nullptr;
                for (int oh = 0; oh < oh_; ++oh) {
                    for (int ow = 0; ow < ow_; ++ow) {
                        const float* gout = &g.data[(static_cast<std::size_t>(oh) * ow_ + ow) * oc];
                        if (gb) {
                            for (int co = 0; co < oc; ++co) gb[co] += gout[co];
                        }
                        for (int kh = 0; kh < k; ++kh) {
                            const int ih = oh * s - p + kh;
                            if (ih < 0 || ih >= h) continue;
                            for (int kw2 = 0; kw2 < k; ++kw2) {
                                const int iw = ow * s - p + kw2;
                                if (iw < 0 || iw >= w) continue;
                                float* ginp = &gin.data[(static_cast<std::size_t>(ih) * w + iw) * c];
                                const float* inp = &ain.data[(static_cast<std::size_t>(ih) * w + iw) * c];
                                const std::size_t base = (static_cast<std::size_t>(kh) * k + kw2) * c * oc;
                                for (int ci = 0; ci < c; ++ci) {
                                    const float* krow = kw + base + static_cast<std::size_t>(ci) * oc;
                                    float dot = 0.0f;
                                    if (gk) {
                                        float* gkrow = gk + base + static_cast<std::size_t>(ci) * oc;
                                        const float a = inp[ci];
                                        for (int co = 0; co < oc; ++co) {
                                            dot += krow[co] * gout[co];
                                            gkrow[co] += a * gout[co];
                                        }
                                    } else {
                                        for (int co = 0; co < oc; ++co) dot += krow[co] * gout[co];
                                    }
                                    ginp[ci] += dot;
                                }
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::MaxPool2d: {
                const int h = ain.shape[0], w = ain.shape[1], c = ain.shape[2];
                const int oh_ = shapes[i][0], ow_ = shapes[i][1];
                const int k = l.kernel, s = l.stride;
                for (int oh = 0; oh < oh_; ++oh) {
                    for (int ow = 0; ow < ow_; ++ow) {
                        for (int ch = 0; ch < c; ++ch) {
                            // First maximal element in scan order receives the gradient.
                            std::size_t best_idx =
                                (static_cast<std::size_t>(oh * s) * w + ow * s) * c + ch;
                            float best = ain.data[best_idx];
                            for (int kh = 0; kh < k; ++kh) {
                                for (int kw2 = 0; kw2 < k; ++kw2) {
                                    const std::size_t idx =
                                        (static_cast<std::size_t>(oh * s + kh) * w + ow * s + kw2) * c + ch;
                                    if (ain.data[idx] > best) {
                                        best = ain.data[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                            gin.data[best_idx] +=
                                g.data[(static_cast<std::size_t>(oh) * ow_ + ow) * c + ch];
                        }
                    }
                }
                break;
            }
            case LayerKind::Relu: {
                for (std::size_t e = 0; e < gin.data.size(); ++e) {
                    gin.data[e] += ain.data[e] > 0.0f ? g.data[e] : 0.0f;
                }
                break;
            }
            case LayerKind::Flatten: {
                for (std::size_t e = 0; e < gin.data.size(); ++e) gin.data[e] += g.data[e];
                break;
            }
            case LayerKind::Dense: {
                const int n_in = ain.shape[0], n_out = shapes[i][0];
                const float* kw = net.weights[i].kernel.data.data();
                float* gk = grad_weights ? (*grad_weights)[i].kernel.data.data() : nullptr;
                float* gb = grad_weights ? (*grad_weights)[i].bias.data.data() : nullptr;
                if (gb) {
                    for (int o = 0; o < n_out; ++o) gb[o] += g.data[o];
                }
                for (int e = 0; e < n_in; ++e) {
                    const float* krow = kw + static_cast<std::size_t>(e) * n_out;
                    float dot = 0.0f;
                    if (gk) {
                        float* gkrow = gk + static_cast<std::size_t>(e) * n_out;
                        const float a = ain.data[e];
                        for (int o = 0; o < n_out; ++o) {
                            dot += krow[o] * g.data[o];
                            gkrow[o] += a * g.data[o];
                        }
                    } else {
                        for (int o = 0; o < n_out; ++o) dot += krow[o] * g.data[o];
                    }
                    gin.data[e] += dot;
                }
                break;
            }
            case LayerKind::ResidualAdd: {
                for (std::size_t e = 0; e < gin.data.size(); ++e) gin.data[e] += g.data[e];
                Tensor& gsrc = gacts[static_cast<std::size_t>(l.skip_source + 1)];
                for (std::size_t e = 0; e < gsrc.data.size(); ++e) gsrc.data[e] += g.data[e];
                break;
            }
        }
    }
    return std::move(gacts[0]);
}

std::vector<Tensor> acts_as_tensors(const Network& net, const Tensor& x,
                                    const std::vector<std::vector<int>>& shapes) {
    auto raw = forward_all<float>(net, x.data, shapes);
    std::vector<Tensor> acts;
    acts.reserve(raw.size());
    acts.emplace_back(x.shape, std::move(raw[0]));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        acts.emplace_back(shapes[i], std::move(raw[i + 1]));
    }
    return acts;
}

void check_input(const Network& net, const Tensor& x) {
    require_shape(x, net.input_shape, "network input");
    require_finite(x, "network input");
    if (net.weights.size() != net.layers.size()) {
        throw ShapeError("network has no weights allocated");
    }
}

}  // namespace

Tensor forward(const Network& net, const Tensor& x) {
    check_input(net, x);
    const auto shapes = layer_output_shapes(net.input_shape, net.layers);
    auto acts = forward_all<float>(net, x.data, shapes);
    return Tensor(shapes.empty() ? net.input_shape : shapes.back(), std::move(acts.back()));
}

Tensor softmax(const Tensor& logits) {
    Tensor out = Tensor::zeros(logits.shape);
    double m = -std::numeric_limits<double>::infinity();
    for (float v : logits.data) m = std::max(m, static_cast<double>(v));
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const double e = std::exp(static_cast<double>(logits.data[i]) - m);
        out.data[i] = static_cast<float>(e);
        sum += e;
    }
    for (float& v : out.data) v = static_cast<float>(v / sum);
    return out;
}

std::pair<float, Tensor> softmax_cross_entropy(const Tensor& logits, int y) {
    if (y < 0 || y >= static_cast<int>(logits.data.size())) {
        throw LabelError("label " + std::to_string(y) + " out of range [0, " +
                         std::to_string(logits.data.size()) + ")");
    }
    double m = -std::numeric_limits<double>::infinity();
    for (float v : logits.data) m = std::max(m, static_cast<double>(v));
    double sum = 0.0;
    for (float v : logits.data) sum += std::exp(static_cast<double>(v) - m);
    const double loss = std::log(sum) - (static_cast<double>(logits.data[y]) - m);
    Tensor grad = Tensor::zeros(logits.shape);
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        grad.data[i] =
            static_cast<float>(std::exp(static_cast<double>(logits.data[i]) - m) / sum);
    }
    grad.data[y] -= 1.0f;
    return {static_cast<float>(std::max(loss, 0.0)), std::move(grad)};
}

BackpropResult backprop(const Network& net, const Tensor& x, int y, bool want_weight_grads) {
    check_input(net, x);
    const auto shapes = layer_output_shapes(net.input_shape, net.layers);
    auto acts = acts_as_tensors(net, x, shapes);
    auto [loss, glogits] = softmax_cross_entropy(acts.back(), y);

    BackpropResult res;
    res.loss = loss;
    if (want_weight_grads) {
        res.grad_weights = make_zero_weights(net.input_shape, net.layers);
    }
    res.grad_input = backward_from_logits(net, acts, shapes, std::move(glogits),
                                          want_weight_grads ? &res.grad_weights : nullptr);
    return res;
}

LossGradient loss_and_input_gradient(const Network& net, const Tensor& x, int y) {
    auto res = backprop(net, x, y, false);
    return LossGradient{res.loss, std::move(res.grad_input)};
}

Tensor logit_vjp(const Network& net, const Tensor& x, const Tensor& upstream) {
    check_input(net, x);
    const auto shapes = layer_output_shapes(net.input_shape, net.layers);
    require_shape(upstream, shapes.back(), "logit_vjp upstream");
    auto acts = acts_as_tensors(net, x, shapes);
    Tensor up = upstream;
    return backward_from_logits(net, acts, shapes, std::move(up), nullptr);
}

void sgd_step(Network& net, const std::vector<LayerWeights>& grads, float lr) {
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
        for (std::size_t e = 0; e < net.weights[i].kernel.data.size(); ++e) {
            net.weights[i].kernel.data[e] -= lr * grads[i].kernel.data[e];
        }
        for (std::size_t e = 0; e < net.weights[i].bias.data.size(); ++e) {
            net.weights[i].bias.data[e] -= lr * grads[i].bias.data[e];
        }
    }
}

Tensor central_difference(const std::function<double(const Tensor&)>& f, const Tensor& x,
                          float h) {
    if (!(h > 0.0f)) {
        throw ParamError("central_difference: step h must be > 0");
    }
    Tensor grad = Tensor::zeros(x.shape);
    Tensor probe = x;
    for (std::size_t e = 0; e < x.data.size(); ++e) {
        const float orig = probe.data[e];
        probe.data[e] = orig + h;
        const float xp = probe.data[e];
        const double jp = f(probe);
        probe.data[e] = orig - h;
        const float xm = probe.data[e];
        const double jm = f(probe);
        probe.data[e] = orig;
        // Divide by the realized step: the float32 probe may not land exactly
        // at x ± h, and the realized step keeps linear functions exact.
        grad.data[e] = static_cast<float>((jp - jm) /
                                          (static_cast<double>(xp) - static_cast<double>(xm)));
    }
    return grad;
}

double loss_value_f64(const Network& net, const std::vector<double>& x, int y) {
    const auto shapes = layer_output_shapes(net.input_shape, net.layers);
    auto acts = forward_all<double>(net, x, shapes);
    const std::vector<double>& z = acts.back();
    if (y < 0 || y >= static_cast<int>(z.size())) {
        throw LabelError("label " + std::to_string(y) + " out of range");
    }
    double m = -std::numeric_limits<double>::infinity();
    for (double v : z) m = std::max(m, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    return std::log(sum) - (z[y] - m);
}

Tensor finite_difference_gradient(const Network& net, const Tensor& x, int y, float h) {
    check_input(net, x);
    if (!(h > 0.0f)) {
        throw ParamError("finite_difference_gradient: step h must be > 0");
    }
    std::vector<double> probe(x.data.begin(), x.data.end());
    Tensor grad = Tensor::zeros(x.shape);
    const double hd = static_cast<double>(h);
    for (std::size_t e = 0; e < probe.size(); ++e) {
        const double orig = probe[e];
        probe[e] = orig + hd;
        const double jp = loss_value_f64(net, probe, y);
        probe[e] = orig - hd;
        const double jm = loss_value_f64(net, probe, y);
        probe[e] = orig;
        grad.data[e] = static_cast<float>((jp - jm) / (2.0 * hd));
    }
    return grad;
}

}  // namespace signshield

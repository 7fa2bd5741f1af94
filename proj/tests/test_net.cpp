#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "signshield/errors.hpp"
#include "signshield/net.hpp"
#include "signshield/rng.hpp"
#include "signshield/tensor.hpp"

using namespace signshield;

namespace {

Tensor random_input(const std::vector<int>& shape, Rng& rng) {
    Tensor x = Tensor::zeros(shape);
    for (float& v : x.data) v = rng.uniform(0.0f, 1.0f);
    return x;
}

// |analytic| below `near_zero` is compared absolutely; otherwise relative
// to the larger magnitude. Returns the number of mismatched elements.
int count_grad_mismatches(const Tensor& analytic, const Tensor& fd, double rel_tol,
                          double abs_tol, double near_zero) {
    REQUIRE(analytic.shape == fd.shape);
    int bad = 0;
    for (std::size_t e = 0; e < analytic.data.size(); ++e) {
        const double a = analytic.data[e];
        const double f = fd.data[e];
        if (std::fabs(a) < near_zero) {
            if (std::fabs(a - f) > abs_tol) ++bad;
        } else if (std::fabs(a - f) / std::max(std::fabs(a), std::fabs(f)) > rel_tol) {
            ++bad;
        }
    }
    return bad;
}

// Four small architecture templates covering every layer kind.
Network random_small_net(int variant, Rng& rng) {
    Network net;
    const int h = 5 + static_cast<int>(rng.uniform_int(4));
    const int w = 5 + static_cast<int>(rng.uniform_int(4));
    const int c = 1 + static_cast<int>(rng.uniform_int(3));
    const int oc = 2 + static_cast<int>(rng.uniform_int(3));
    const int nc = 3 + static_cast<int>(rng.uniform_int(3));
    net.input_shape = {h, w, c};
    switch (variant % 4) {
        case 0:
            net.layers = {LayerSpec::conv2d(3, oc, 1 + static_cast<int>(rng.uniform_int(2)), 1),
                          LayerSpec::relu(),
                          LayerSpec::conv2d(2, oc, 1, 0),
                          LayerSpec::relu(),
                          LayerSpec::flatten(),
                          LayerSpec::dense(nc)};
            break;
        case 1:  // residual block in the middle
            net.layers = {LayerSpec::conv2d(3, oc, 1, 1),
                          LayerSpec::relu(),
                          LayerSpec::conv2d(3, oc, 1, 1),
                          LayerSpec::residual_add(1),
                          LayerSpec::relu(),
                          LayerSpec::maxpool2d(2, 2),
                          LayerSpec::flatten(),
                          LayerSpec::dense(nc)};
            break;
        case 2:  // pooling + two dense stages
            net.layers = {LayerSpec::conv2d(3, oc, 1, 0),
                          LayerSpec::relu(),
                          LayerSpec::maxpool2d(2, 2),
                          LayerSpec::flatten(),
                          LayerSpec::dense(8),
                          LayerSpec::relu(),
                          LayerSpec::dense(nc)};
            break;
        default:  // skip connection straight from the input
            net.layers = {LayerSpec::conv2d(1, c, 1, 0),
                          LayerSpec::residual_add(-1),
                          LayerSpec::relu(),
                          LayerSpec::flatten(),
                          LayerSpec::dense(nc)};
            break;
    }
    net.weights = make_zero_weights(net.input_shape, net.layers);
    init_weights(net, rng);
    return net;
}

// Central differences over one layer's weights, forward in double precision.
LayerWeights fd_weight_grad(Network& net, std::size_t layer, const Tensor& x, int y, float h) {
    LayerWeights out;
    out.kernel = Tensor::zeros(net.weights[layer].kernel.shape);
    out.bias = Tensor::zeros(net.weights[layer].bias.shape);
    const std::vector<double> xd(x.data.begin(), x.data.end());
    auto probe = [&](Tensor& wt, Tensor& dst) {
        for (std::size_t e = 0; e < wt.data.size(); ++e) {
            const float orig = wt.data[e];
            wt.data[e] = orig + h;
            const double jp = loss_value_f64(net, xd, y);
            wt.data[e] = orig - h;
            const double jm = loss_value_f64(net, xd, y);
            wt.data[e] = orig;
            dst.data[e] = static_cast<float>((jp - jm) / (2.0 * static_cast<double>(h)));
        }
    };
    probe(net.weights[layer].kernel, out.kernel);
    probe(net.weights[layer].bias, out.bias);
    return out;
}

}  // namespace

TEST_CASE("net: identity 1x1 conv reproduces its input") {
    Network net;
    net.input_shape = {3, 3, 2};
    net.layers = {LayerSpec::conv2d(1, 2, 1, 0)};
    net.weights = make_zero_weights(net.input_shape, net.layers);
    // kernel {1,1,ci,co}: identity matrix over channels
    net.weights[0].kernel.data = {1.0f, 0.0f, 0.0f, 1.0f};
    Rng rng(3);
    Tensor x = random_input(net.input_shape, rng);
    Tensor y = forward(net, x);
    CHECK(y.data == x.data);
}

TEST_CASE("net: single dense layer is a dot product") {
    Network net;
    net.input_shape = {2};
    net.layers = {LayerSpec::dense(1)};
    net.weights = make_zero_weights(net.input_shape, net.layers);
    net.weights[0].kernel.data = {1.0f, 2.0f};
    Tensor x({2}, {3.0f, 4.0f});
    Tensor z = forward(net, x);
    CHECK(z.data.size() == 1);
    CHECK(z.data[0] == doctest::Approx(11.0).epsilon(1e-7));
}

TEST_CASE("net: 2x2 maxpool stride 2 takes the block max") {
    Network net;
    net.input_shape = {2, 2, 1};
    net.layers = {LayerSpec::maxpool2d(2, 2)};
    net.weights = make_zero_weights(net.input_shape, net.layers);
    Tensor x({2, 2, 1}, {1.0f, 2.0f, 3.0f, 4.0f});
    Tensor z = forward(net, x);
    CHECK(z.shape == std::vector<int>{1, 1, 1});
    CHECK(z.data[0] == 4.0f);
}

TEST_CASE("net: uniform logits give loss ln 2 and softmax-minus-onehot gradient") {
    Network net;
    net.input_shape = {2};
    net.layers = {LayerSpec::flatten()};
    net.weights = make_zero_weights(net.input_shape, net.layers);
    Tensor x({2}, {0.0f, 0.0f});
    LossGradient lg = loss_and_input_gradient(net, x, 0);
    CHECK(lg.loss == doctest::Approx(std::log(2.0)).epsilon(1e-7));
    CHECK(lg.grad_input.data[0] == doctest::Approx(-0.5).epsilon(1e-7));
    CHECK(lg.grad_input.data[1] == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("net: dense-layer input gradient equals W (softmax - onehot)") {
    Network net;
    net.input_shape = {3};
    net.layers = {LayerSpec::dense(4)};
    net.weights = make_zero_weights(net.input_shape, net.layers);
    Rng rng(21);
    init_weights(net, rng);
    Tensor x({3}, {0.2f, -0.4f, 0.7f});
    const int y = 2;
    Tensor logits = forward(net, x);
    auto [loss, glog] = softmax_cross_entropy(logits, y);
    LossGradient lg = loss_and_input_gradient(net, x, y);
    CHECK(lg.loss == loss);
    for (int i = 0; i < 3; ++i) {
        float want = 0.0f;
        for (int o = 0; o < 4; ++o) {
            want += net.weights[0].kernel.data[i * 4 + o] * glog.data[o];
        }
        CHECK(lg.grad_input.data[i] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("net: softmax sums to one, cross-entropy is nonnegative") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(17));
        Tensor z = Tensor::zeros({n});
        for (float& v : z.data) v = rng.uniform(-30.0f, 30.0f);
        Tensor p = softmax(z);
        double sum = 0.0;
        for (float v : p.data) {
            CHECK(v >= 0.0f);
            sum += v;
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
        auto [loss, grad] = softmax_cross_entropy(z, static_cast<int>(rng.uniform_int(n)));
        CHECK(loss >= 0.0f);
        CHECK(grad.shape == z.shape);
    }
}

TEST_CASE("net: forward is pure (bit-identical repeat calls)") {
    Rng rng(41);
    Network net = random_small_net(1, rng);
    Tensor x = random_input(net.input_shape, rng);
    Tensor a = forward(net, x);
    Tensor b = forward(net, x);
    CHECK(a.data == b.data);
}

TEST_CASE("net: central differences of simple scalar functions") {
    auto f_linear = [](const Tensor& t) { return 2.0 * static_cast<double>(t.data[0]); };
    Tensor x0({1}, {5.0f});
    for (float h : {1e-1f, 1e-2f, 1e-3f}) {
        Tensor g = central_difference(f_linear, x0, h);
        CHECK(g.data[0] == doctest::Approx(2.0).epsilon(1e-6));
    }
    auto f_square = [](const Tensor& t) {
        const double v = t.data[0];
        return v * v;
    };
    Tensor x3({1}, {3.0f});
    Tensor g = central_difference(f_square, x3, 0.01f);
    CHECK(g.data[0] == doctest::Approx(6.0).epsilon(1e-6));
    CHECK_THROWS_AS(central_difference(f_square, x3, 0.0f), ParamError);
    CHECK_THROWS_AS(central_difference(f_square, x3, -1.0f), ParamError);
}

TEST_CASE("net: conv-net input gradient matches finite differences at h=1e-3") {
    Rng rng(101);
    Network net;
    net.input_shape = {8, 8, 1};
    net.layers = {LayerSpec::conv2d(3, 4, 1, 0), LayerSpec::relu(),
                  LayerSpec::conv2d(3, 4, 1, 0), LayerSpec::relu(),
                  LayerSpec::flatten(),          LayerSpec::dense(5)};
    net.weights = make_zero_weights(net.input_shape, net.layers);
    init_weights(net, rng);
    Tensor x = random_input(net.input_shape, rng);
    LossGradient lg = loss_and_input_gradient(net, x, 2);
    Tensor fd = finite_difference_gradient(net, x, 2, 1e-3f);
    CHECK(count_grad_mismatches(lg.grad_input, fd, 1e-3, 1e-5, 1e-6) == 0);
}

TEST_CASE("net: gradient check over 24 random small nets") {
    // h = 1e-6: the oracle runs in double, so truncation and roundoff stay
    // far below tolerance, and a small step keeps finite-difference probes
    // from stepping across relu/maxpool kinks.
    int checked = 0;
    for (int variant = 0; variant < 4; ++variant) {
        for (int rep = 0; rep < 6; ++rep) {
            Rng rng(1000 + variant * 100 + rep);
            Network net = random_small_net(variant, rng);
            Tensor x = random_input(net.input_shape, rng);
            const int y = static_cast<int>(rng.uniform_int(
                static_cast<std::uint64_t>(net.layers.back().units)));
            LossGradient lg = loss_and_input_gradient(net, x, y);
            Tensor fd = finite_difference_gradient(net, x, y, 1e-6f);
            const int bad = count_grad_mismatches(lg.grad_input, fd, 1e-3, 1e-5, 1e-6);
            CHECK_MESSAGE(bad == 0, "variant ", variant, " rep ", rep, " mismatches ", bad);
            ++checked;
        }
    }
    CHECK(checked >= 20);
}

TEST_CASE("net: weight gradients match finite differences") {
    for (int variant : {0, 2, 3}) {
        Rng rng(7000 + variant);
        Network net = random_small_net(variant, rng);
        Tensor x = random_input(net.input_shape, rng);
        const int y = 1;
        BackpropResult res = backprop(net, x, y, true);
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
            if (net.weights[li].kernel.empty()) continue;
            LayerWeights fd = fd_weight_grad(net, li, x, y, 1e-4f);
            const int bad_k =
                count_grad_mismatches(res.grad_weights[li].kernel, fd.kernel, 1e-3, 1e-5, 1e-6);
            const int bad_b =
                count_grad_mismatches(res.grad_weights[li].bias, fd.bias, 1e-3, 1e-5, 1e-6);
            CHECK_MESSAGE(bad_k == 0, "variant ", variant, " layer ", li, " kernel");
            CHECK_MESSAGE(bad_b == 0, "variant ", variant, " layer ", li, " bias");
        }
    }
}

TEST_CASE("net: residual skip from the input adds one to the gradient path") {
    Network net;
    net.input_shape = {4, 4, 1};
    net.layers = {LayerSpec::conv2d(1, 1, 1, 0), LayerSpec::residual_add(-1),
                  LayerSpec::flatten(), LayerSpec::dense(3)};
    net.weights = make_zero_weights(net.input_shape, net.layers);
    Rng rng(55);
    init_weights(net, rng);
    Tensor x = random_input(net.input_shape, rng);
    LossGradient lg = loss_and_input_gradient(net, x, 0);
    Tensor fd = finite_difference_gradient(net, x, 0, 1e-4f);
    CHECK(count_grad_mismatches(lg.grad_input, fd, 1e-3, 1e-5, 1e-6) == 0);
}

TEST_CASE("net: maxpool ties route the gradient to the first element in scan order") {
    Network net;
    net.input_shape = {2, 2, 1};
    net.layers = {LayerSpec::maxpool2d(2, 2), LayerSpec::flatten(), LayerSpec::dense(2)};
    net.weights = make_zero_weights(net.input_shape, net.layers);
    net.weights[2].kernel.data = {1.0f, -1.0f};
    Tensor x({2, 2, 1}, {0.7f, 0.7f, 0.7f, 0.7f});
    LossGradient lg = loss_and_input_gradient(net, x, 0);
    CHECK(lg.grad_input.data[0] != 0.0f);
    CHECK(lg.grad_input.data[1] == 0.0f);
    CHECK(lg.grad_input.data[2] == 0.0f);
    CHECK(lg.grad_input.data[3] == 0.0f);
}

TEST_CASE("net: relu gradient at exactly zero is zero") {
    Network net;
    net.input_shape = {2};
    net.layers = {LayerSpec::relu(), LayerSpec::dense(2)};
    net.weights = make_zero_weights(net.input_shape, net.layers);
    net.weights[1].kernel.data = {1.0f, 0.0f, 0.0f, 1.0f};
    Tensor x({2}, {0.0f, 0.5f});
    LossGradient lg = loss_and_input_gradient(net, x, 0);
    CHECK(lg.grad_input.data[0] == 0.0f);
    CHECK(lg.grad_input.data[1] != 0.0f);
}

TEST_CASE("net: logit_vjp is consistent with the cross-entropy gradient") {
    Rng rng(66);
    Network net = random_small_net(2, rng);
    Tensor x = random_input(net.input_shape, rng);
    const int y = 0;
    Tensor logits = forward(net, x);
    auto [loss, glog] = softmax_cross_entropy(logits, y);
    Tensor via_vjp = logit_vjp(net, x, glog);
    LossGradient lg = loss_and_input_gradient(net, x, y);
    CHECK(max_abs_diff(via_vjp, lg.grad_input) == 0.0f);
}

TEST_CASE("net: shape and label validation") {
    Rng rng(77);
    Network net = random_small_net(0, rng);
    Tensor wrong = Tensor::zeros({2, 2, 1});
    CHECK_THROWS_AS(forward(net, wrong), ShapeError);
    Tensor x = random_input(net.input_shape, rng);
    CHECK_THROWS_AS(loss_and_input_gradient(net, x, -1), LabelError);
    CHECK_THROWS_AS(loss_and_input_gradient(net, x, 999), LabelError);
    CHECK_THROWS_AS(finite_difference_gradient(net, x, 0, 0.0f), ParamError);
    Tensor bad = x;
    bad.data[0] = std::nanf("");
    CHECK_THROWS(forward(net, bad));
}

TEST_CASE("net: invalid layer chains are rejected") {
    CHECK_THROWS_AS(layer_output_shapes({4, 4, 1}, {LayerSpec::dense(3)}), ShapeError);
    CHECK_THROWS_AS(layer_output_shapes({4, 4, 1}, {LayerSpec::conv2d(0, 3)}), ParamError);
    CHECK_THROWS_AS(layer_output_shapes({4, 4, 1}, {LayerSpec::conv2d(3, 3, 0)}), ParamError);
    CHECK_THROWS_AS(layer_output_shapes({4, 4, 1}, {LayerSpec::maxpool2d(8, 2)}), ShapeError);
    // residual-add against a mismatched shape
    CHECK_THROWS_AS(layer_output_shapes({4, 4, 2},
                                        {LayerSpec::conv2d(3, 2, 1, 0), LayerSpec::residual_add(-1)}),
                    ShapeError);
    // skip source must point at an earlier layer
    CHECK_THROWS_AS(layer_output_shapes({4, 4, 2}, {LayerSpec::residual_add(3)}), ParamError);
    // valid chain reports per-layer shapes
    auto shapes = layer_output_shapes(
        {8, 8, 3}, {LayerSpec::conv2d(3, 4, 1, 1), LayerSpec::maxpool2d(2, 2),
                    LayerSpec::flatten(), LayerSpec::dense(18)});
    CHECK(shapes[0] == std::vector<int>{8, 8, 4});
    CHECK(shapes[1] == std::vector<int>{4, 4, 4});
    CHECK(shapes[2] == std::vector<int>{64});
    CHECK(shapes[3] == std::vector<int>{18});
}

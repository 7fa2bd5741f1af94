#include "signshield/hybrid.hpp"

#include <algorithm>
#include <optional>
#include <vector>

#include "doctest.h"
#include "signshield/dataset.hpp"
#include "signshield/errors.hpp"
#include "signshield/model.hpp"
#include "signshield/net.hpp"
#include "signshield/transforms.hpp"

using namespace signshield;

namespace {

// Flatten + zero dense with a single bias spike: predicts `label` for every
// input of the given extent. Lets vote plumbing be tested without training.
TrainedModel constant_model(int label, const std::vector<int>& input_shape) {
    TrainedModel m;
    m.net.input_shape = input_shape;
    m.net.layers = {LayerSpec::flatten(), LayerSpec::dense(kClassCount)};
    m.net.weights = make_zero_weights(m.net.input_shape, m.net.layers);
    m.net.weights[1].bias.data[(std::size_t)label] = 1.0f;
    return m;
}

TrainedModel tiny_model(int extent, std::uint64_t seed) {
    auto data = generate_synthetic(51, 2, 48);
    ModelArchitecture arch;
    arch.id = ArchId::MODEL_A;
    arch.input_shape = {extent, extent, 3};
    arch.layers = {
        LayerSpec::conv2d(3, 4, 1, 1),
        LayerSpec::relu(),
        LayerSpec::maxpool2d(4, 4),
        LayerSpec::flatten(),
        LayerSpec::dense(kClassCount),
    };
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.1f;
    cfg.seed = seed;
    return train(data, arch, cfg);
}

std::optional<int> no_feature(const Tensor&) { return std::nullopt; }

}  // namespace

TEST_CASE("ensemble_vote matches a brute-force plurality oracle") {
    // Every ordered tuple of length 1..4 over three labels.
    for (int len = 1; len <= 4; ++len) {
        int tuples = 1;
        for (int i = 0; i < len; ++i) tuples *= 3;
        for (int code = 0; code < tuples; ++code) {
            std::vector<int> labels;
            int c = code;
            for (int i = 0; i < len; ++i) {
                labels.push_back(c % 3);
                c /= 3;
            }
            int counts[3] = {0, 0, 0};
            for (int l : labels) ++counts[l];
            int best = std::max({counts[0], counts[1], counts[2]});
            std::vector<int> tied;
            for (int l = 0; l < 3; ++l) {
                if (counts[l] == best) tied.push_back(l);
            }

            Rng rng((std::uint64_t)(code * 7 + len));
            int v = ensemble_vote(labels, rng);
            CHECK(counts[v] == best);
            if (tied.size() == 1) CHECK(v == tied.front());

            Rng r1(5);
            Rng r2(5);
            CHECK(ensemble_vote(labels, r1) == ensemble_vote(labels, r2));
        }
    }
}

TEST_CASE("ensemble_vote breaks two-way ties each way about half the time") {
    std::vector<int> labels;
    for (int i = 0; i < 9; ++i) labels.push_back(2);
    for (int i = 0; i < 9; ++i) labels.push_back(7);
    int low = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng(seed);
        int v = ensemble_vote(labels, rng);
        CHECK((v == 2 || v == 7));
        if (v == 2) ++low;
    }
    CHECK(low >= 450);
    CHECK(low <= 550);
}

TEST_CASE("ensemble_vote rejects empty and negative input") {
    Rng rng(1);
    CHECK_THROWS_AS(ensemble_vote({}, rng), ParamError);
    CHECK_THROWS_AS(ensemble_vote({1, -1}, rng), LabelError);
}

TEST_CASE("candidate_labels: count, order determinism, and validation") {
    TrainedModel constant = constant_model(4, {8, 8, 3});
    Tensor x({8, 8, 3}, std::vector<float>(8 * 8 * 3, 0.0f));
    for (std::size_t e = 0; e < x.data.size(); ++e) x.data[e] = 0.25f + 0.002f * (float)(e % 7);

    Rng rng(3);
    auto labels = candidate_labels(constant, x, 6, 0.94f, rng);
    REQUIRE(labels.size() == 6);
    for (int l : labels) CHECK(l == 4);

    TrainedModel real = tiny_model(16, 8);
    Tensor base = bilinear_resize(generate_synthetic(60, 1, 48)[0].image, 16, 16);
    Rng ra(12);
    Rng rb(12);
    auto seq_a = candidate_labels(real, base, 5, 0.9f, ra);
    auto seq_b = candidate_labels(real, base, 5, 0.9f, rb);
    CHECK(seq_a == seq_b);
    for (int l : seq_a) {
        CHECK(l >= 0);
        CHECK(l < kClassCount);
    }

    Rng rc(1);
    CHECK_THROWS_AS(candidate_labels(constant, x, 0, 0.94f, rc), ParamError);
}

TEST_CASE("classify_hybrid: three stages with a controlled text label") {
    TrainedModel a = constant_model(3, {8, 8, 3});
    TrainedModel b = constant_model(5, {6, 6, 3});
    Tensor x({8, 8, 3}, std::vector<float>(8 * 8 * 3, 0.5f));
    HybridConfig cfg;
    CHECK(cfg.m == 8);
    CHECK(cfg.n == 10);
    CHECK(cfg.crop_fraction == doctest::Approx(0.94f));

    int feature_calls = 0;

    SUBCASE("text label agreeing with the crop vote is confirmed") {
        Rng rng(2);
        auto d = classify_hybrid(x, a, b, cfg, rng, [&](const Tensor&) {
            ++feature_calls;
            return std::optional<int>(3);
        });
        CHECK(d.label == 3);
        CHECK(d.stage == HybridStage::Step1Match);
        CHECK_FALSE(d.attack_detected);
        CHECK(d.tally.empty());
        CHECK(d.feature_label == 3);
        CHECK(feature_calls == 1);
    }

    SUBCASE("text label disagreeing with the crop vote wins and flags an attack") {
        Rng rng(2);
        auto d = classify_hybrid(x, a, b, cfg, rng, [&](const Tensor&) {
            ++feature_calls;
            return std::optional<int>(9);
        });
        CHECK(d.label == 9);
        CHECK(d.stage == HybridStage::Step1FeatureTrusted);
        CHECK(d.attack_detected);
        CHECK(d.feature_label == 9);
        CHECK(feature_calls == 1);
    }

    SUBCASE("no text label falls through to an m:n two-model vote") {
        Rng rng(2);
        auto d = classify_hybrid(x, a, b, cfg, rng, no_feature);
        CHECK(d.label == 5);  // n = 10 model-B votes outweigh m = 8
        CHECK(d.stage == HybridStage::Ensemble);
        CHECK_FALSE(d.attack_detected);
        CHECK_FALSE(d.feature_label.has_value());
        REQUIRE(d.tally.size() == (std::size_t)kClassCount);
        CHECK(d.tally[3] == cfg.m);
        CHECK(d.tally[5] == cfg.n);
        int total = 0;
        for (int t : d.tally) total += t;
        CHECK(total == cfg.m + cfg.n);
    }

    SUBCASE("agreeing models yield a unanimous tally") {
        TrainedModel b2 = constant_model(3, {6, 6, 3});
        Rng rng(2);
        auto d = classify_hybrid(x, a, b2, cfg, rng, no_feature);
        CHECK(d.label == 3);
        CHECK(d.tally[3] == cfg.m + cfg.n);
    }
}

TEST_CASE("classify_hybrid: crop fraction 1.0 reduces to weighted single predictions") {
    TrainedModel a = tiny_model(16, 8);
    TrainedModel b = tiny_model(12, 9);
    Tensor x = bilinear_resize(generate_synthetic(61, 1, 48)[5].image, 16, 16);

    int pa = predict(a, x).label;
    int pb = predict(b, bilinear_resize(x, 12, 12)).label;
    int expected = (pa == pb) ? pa : pb;  // 10 B votes beat 8 A votes

    HybridConfig cfg;
    cfg.crop_fraction = 1.0f;
    Rng rng(4);
    auto d = classify_hybrid(x, a, b, cfg, rng, no_feature);
    CHECK(d.label == expected);
    CHECK(d.tally[pa] + (pa == pb ? 0 : d.tally[pb]) == cfg.m + cfg.n);
    if (pa != pb) {
        CHECK(d.tally[pa] == cfg.m);
        CHECK(d.tally[pb] == cfg.n);
    }
}

TEST_CASE("classify_hybrid: replicable from the documented child streams") {
    TrainedModel a = tiny_model(16, 8);
    TrainedModel b = tiny_model(12, 9);
    Tensor x = bilinear_resize(generate_synthetic(62, 1, 48)[9].image, 16, 16);
    HybridConfig cfg;

    // Reconstruct the decision by hand: child(0) feeds A crops, child(1)
    // feeds B crops, child(2) breaks ties, votes consume in that order.
    Rng root(11);
    Rng a_stream = root.child(0);
    Rng b_stream = root.child(1);
    Rng tie_stream = root.child(2);
    auto la = candidate_labels(a, x, cfg.m, cfg.crop_fraction, a_stream);
    (void)ensemble_vote(la, tie_stream);
    auto lb = candidate_labels(b, bilinear_resize(x, 12, 12), cfg.n, cfg.crop_fraction, b_stream);
    std::vector<int> all = la;
    all.insert(all.end(), lb.begin(), lb.end());
    int expected = ensemble_vote(all, tie_stream);

    Rng r1(11);
    auto d1 = classify_hybrid(x, a, b, cfg, r1, no_feature);
    CHECK(d1.label == expected);
    std::vector<int> counts(kClassCount, 0);
    for (int l : all) ++counts[l];
    CHECK(d1.tally == counts);

    // Identical seed, identical decision.
    Rng r2(11);
    auto d2 = classify_hybrid(x, a, b, cfg, r2, no_feature);
    CHECK(d2.label == d1.label);
    CHECK(d2.stage == d1.stage);
    CHECK(d2.tally == d1.tally);

    // Only child streams are consumed; the parent position is untouched.
    Rng used(11);
    Rng fresh(11);
    (void)classify_hybrid(x, a, b, cfg, used, no_feature);
    CHECK(used.uniform_int(1u << 20) == fresh.uniform_int(1u << 20));
}

TEST_CASE("classify_hybrid: real text pipeline on rendered signs") {
    const int stop = class_id_by_name("stop");
    TrainedModel agree = constant_model(stop, {64, 64, 3});
    TrainedModel other = constant_model(3, {64, 64, 3});
    TrainedModel b = constant_model(7, {56, 56, 3});

    Rng render_rng(21);
    Tensor stop_img = render_sign(stop, 64, render_rng);
    HybridConfig cfg;

    SUBCASE("clean stop sign: crop vote and text agree") {
        Rng rng(5);
        auto d = classify_hybrid(stop_img, agree, b, cfg, rng);
        CHECK(d.label == stop);
        CHECK(d.stage == HybridStage::Step1Match);
        CHECK_FALSE(d.attack_detected);
        CHECK(d.feature_label == stop);
    }

    SUBCASE("model fooled away from a text sign: text wins, attack flagged") {
        Rng rng(5);
        auto d = classify_hybrid(stop_img, other, b, cfg, rng);
        CHECK(d.label == stop);
        CHECK(d.stage == HybridStage::Step1FeatureTrusted);
        CHECK(d.attack_detected);
    }

    SUBCASE("symbol-only sign has no text label and goes to the ensemble") {
        Rng render2(22);
        Tensor curve = render_sign(class_id_by_name("curve_left"), 64, render2);
        Rng rng(5);
        auto d = classify_hybrid(curve, other, b, cfg, rng);
        CHECK(d.stage == HybridStage::Ensemble);
        CHECK(d.label == 7);
        CHECK_FALSE(d.attack_detected);
        CHECK_FALSE(d.feature_label.has_value());
        CHECK(d.tally[3] == cfg.m);
        CHECK(d.tally[7] == cfg.n);
    }
}

TEST_CASE("classify_hybrid: input validation") {
    TrainedModel a = constant_model(0, {8, 8, 3});
    TrainedModel b = constant_model(1, {6, 6, 3});
    Tensor wrong({4, 4, 3}, std::vector<float>(4 * 4 * 3, 0.5f));
    Rng rng(1);
    CHECK_THROWS_AS(classify_hybrid(wrong, a, b, HybridConfig{}, rng, no_feature), ShapeError);

    Tensor ok({8, 8, 3}, std::vector<float>(8 * 8 * 3, 0.5f));
    HybridConfig bad;
    bad.m = 0;
    CHECK_THROWS_AS(classify_hybrid(ok, a, b, bad, rng, no_feature), ParamError);
}

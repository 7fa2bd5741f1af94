#include "signshield/hybrid.hpp"

#include <algorithm>
#include <cstddef>

#include "signshield/errors.hpp"
#include "signshield/featuremap.hpp"
#include "signshield/transforms.hpp"

namespace signshield {

std::string stage_name(HybridStage stage) {
    switch (stage) {
        case HybridStage::Step1Match:
            return "step1_match";
        case HybridStage::Step1FeatureTrusted:
            return "step1_feature_trusted";
        case HybridStage::Ensemble:
            return "ensemble";
    }
    throw ParamError("stage_name: unknown stage");
}

int ensemble_vote(const std::vector<int>& labels, Rng& rng) {
    if (labels.empty()) throw ParamError("ensemble_vote: no labels to vote on");
    int max_label = 0;
    for (int l : labels) {
        if (l < 0) throw LabelError("ensemble_vote: negative label " + std::to_string(l));
        max_label = std::max(max_label, l);
    }
    std::vector<int> counts(static_cast<std::size_t>(max_label) + 1, 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    int best = *std::max_element(counts.begin(), counts.end());
    std::vector<int> tied;
    for (std::size_t l = 0; l < counts.size(); ++l) {
        if (counts[l] == best) tied.push_back(static_cast<int>(l));
    }
    if (tied.size() == 1) return tied.front();
    return tied[static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(tied.size())))];
}

std::vector<int> candidate_labels(const TrainedModel& model, const Tensor& x, int count,
                                  float fraction, Rng& rng) {
    if (count < 1) throw ParamError("candidate_labels: count must be positive");
    std::vector<int> labels;
    labels.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Tensor crop = random_crop_resize(x, fraction, rng);
        labels.push_back(predict(model, crop).label);
    }
    return labels;
}

PipelineDecision classify_hybrid(const Tensor& x, const TrainedModel& model_a,
                                 const TrainedModel& model_b, const HybridConfig& cfg, Rng& rng,
                                 const FeatureLabelFn& feature_fn) {
    if (cfg.m < 1 || cfg.n < 1) throw ParamError("classify_hybrid: m and n must be positive");
    if (x.shape != model_a.net.input_shape) {
        throw ShapeError("classify_hybrid: image does not match model A input");
    }
    Rng a_stream = rng.child(0);
    Rng b_stream = rng.child(1);
    Rng tie_stream = rng.child(2);

    std::vector<int> labels_a = candidate_labels(model_a, x, cfg.m, cfg.crop_fraction, a_stream);
    int label_a = ensemble_vote(labels_a, tie_stream);
    std::optional<int> feature = feature_fn(x);

    PipelineDecision decision;
    decision.feature_label = feature;
    if (feature.has_value()) {
        if (*feature == label_a) {
            decision.label = label_a;
            decision.stage = HybridStage::Step1Match;
        } else {
            decision.label = *feature;
            decision.stage = HybridStage::Step1FeatureTrusted;
            decision.attack_detected = true;
        }
        return decision;
    }

    const std::vector<int>& b_shape = model_b.net.input_shape;
    Tensor xb = bilinear_resize(x, b_shape[0], b_shape[1]);
    std::vector<int> all = labels_a;
    std::vector<int> labels_b = candidate_labels(model_b, xb, cfg.n, cfg.crop_fraction, b_stream);
    all.insert(all.end(), labels_b.begin(), labels_b.end());

    decision.label = ensemble_vote(all, tie_stream);
    decision.stage = HybridStage::Ensemble;
    decision.tally.assign(kClassCount, 0);
    for (int l : all) {
        if (l < kClassCount) ++decision.tally[static_cast<std::size_t>(l)];
    }
    return decision;
}

PipelineDecision classify_hybrid(const Tensor& x, const TrainedModel& model_a,
                                 const TrainedModel& model_b, const HybridConfig& cfg, Rng& rng) {
    return classify_hybrid(x, model_a, model_b, cfg, rng,
                           [](const Tensor& img) { return feature_label(img); });
}

}  // namespace signshield

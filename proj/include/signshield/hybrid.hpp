#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "signshield/model.hpp"
#include "signshield/rng.hpp"
#include "signshield/tensor.hpp"

namespace signshield {

struct HybridConfig {
    int m = 8;                   // random-crop candidates from model A
    int n = 10;                  // random-crop candidates from model B
    float crop_fraction = 0.94f;
    std::uint64_t seed = 0;      // stream root for callers that own seeding
};

enum class HybridStage { Step1Match, Step1FeatureTrusted, Ensemble };

/// "step1_match", "step1_feature_trusted", or "ensemble".
std::string stage_name(HybridStage stage);

struct PipelineDecision {
    int label = 0;
    HybridStage stage = HybridStage::Ensemble;
    bool attack_detected = false;       // true iff stage == Step1FeatureTrusted
    std::vector<int> tally;             // per-class vote counts, ensemble stage only
    std::optional<int> feature_label;   // what the text pipeline said, if anything
};

/// Label with the highest count; ties resolved uniformly at random among the
/// tied labels. Throws ParamError on an empty list, LabelError on negatives.
int ensemble_vote(const std::vector<int>& labels, Rng& rng);

/// Predicts `count` independently cropped/resized variants of x and returns
/// the labels in draw order.
std::vector<int> candidate_labels(const TrainedModel& model, const Tensor& x, int count,
                                  float fraction, Rng& rng);

/// Pluggable stand-in for the text pipeline (detect_text + map_to_label).
using FeatureLabelFn = std::function<std::optional<int>(const Tensor&)>;

/// Three-step defense:
///   1. labelA = vote over m random-filtered model-A predictions; read the
///      image's text label.
///   2. text label equal to labelA -> trust it (no attack); text label
///      different -> trust the text label and flag an attack.
///   3. no text label -> vote over all m+n candidates from both models
///      (model B sees a bilinear resize of x).
/// Consumes only child streams of rng (children 0/1/2 for A-crops, B-crops,
/// and tie-breaks), so the parent stream position never changes.
PipelineDecision classify_hybrid(const Tensor& x, const TrainedModel& model_a,
                                 const TrainedModel& model_b, const HybridConfig& cfg, Rng& rng,
                                 const FeatureLabelFn& feature_fn);

/// Same, wired to the built-in glyph-template text pipeline.
PipelineDecision classify_hybrid(const Tensor& x, const TrainedModel& model_a,
                                 const TrainedModel& model_b, const HybridConfig& cfg, Rng& rng);

}  // namespace signshield

#pragma once

#include <cstdint>
#include <vector>

#include "signshield/model.hpp"
#include "signshield/rng.hpp"
#include "signshield/tensor.hpp"

namespace signshield {

/// White-box view of a classifier: logits, cross-entropy input gradient,
/// and the input gradient of any linear combination of logits (needed by
/// margin objectives). Implementations must be deterministic and safe to
/// call from multiple threads.
class GradientOracle {
public:
    virtual ~GradientOracle() = default;
    virtual Tensor logits(const Tensor& x) const = 0;
    /// d/dx of softmax cross-entropy against class y.
    virtual Tensor grad(const Tensor& x, int y) const = 0;
    /// d/dx of <upstream, logits(x)>.
    virtual Tensor logit_vjp(const Tensor& x, const Tensor& upstream) const = 0;
};

/// GradientOracle over a trained model; holds a reference, so the model
/// must outlive the oracle.
class ModelOracle : public GradientOracle {
public:
    explicit ModelOracle(const TrainedModel& model) : model_(model) {}
    Tensor logits(const Tensor& x) const override;
    Tensor grad(const Tensor& x, int y) const override;
    Tensor logit_vjp(const Tensor& x, const Tensor& upstream) const override;

private:
    const TrainedModel& model_;
};

struct FgsmConfig {
    float epsilon = 0.1f;
};

struct MimConfig {
    float epsilon = 0.1f;
    int steps = 10;
    float decay = 1.0f;
    float alpha = 0.0f;  // <= 0 resolves to epsilon / steps
};

struct PgdConfig {
    float epsilon = 0.1f;
    int steps = 40;
    float alpha = 0.0f;  // <= 0 resolves to 2.5 * epsilon / steps
    bool random_start = true;
};

struct CwConfig {
    float c = 1.0f;
    int max_iterations = 80;
    float learning_rate = 0.01f;
    float confidence = 0.0f;
    bool search_c = false;  // retry over c in {0.01, 0.1, 1, 10}, keep best
};

struct AttackResult {
    Tensor adversarial;
    bool success = false;  // oracle label != y on the returned image
    float linf_distortion = 0.0f;
    float l2_distortion = 0.0f;
    int iterations = 0;
};

/// One-step sign attack: x' = clamp(x + eps * sign(grad), 0, 1); sign(0)=0.
AttackResult fgsm(const GradientOracle& oracle, const Tensor& x, int y, const FgsmConfig& cfg);

/// Momentum iterative attack. Per step the gradient is L1-normalized (a
/// zero gradient contributes nothing), accumulated with decay, and the
/// image moves alpha * sign(momentum), clamped to [0,1]. `trace`, when
/// given, receives the iterate after every step.
AttackResult mim(const GradientOracle& oracle, const Tensor& x, int y, const MimConfig& cfg,
                 std::vector<Tensor>* trace = nullptr);

/// Projected gradient descent under the L-inf ball of radius epsilon:
/// every step (and the optional random start) is clamped back to
/// [x-eps, x+eps] and [0,1].
AttackResult pgd(const GradientOracle& oracle, const Tensor& x, int y, const PgdConfig& cfg,
                 Rng& rng, std::vector<Tensor>* trace = nullptr);

/// Maps an image in [0,1] to the unconstrained tanh-space variable and back;
/// cw_decode(cw_encode(x)) == x up to float round-off.
Tensor cw_encode(const Tensor& x);
Tensor cw_decode(const Tensor& w);

/// One evaluated candidate during the L2 optimization.
struct CwIterate {
    bool success = false;
    float l2 = 0.0f;
};

/// Carlini-Wagner L2: minimizes ||delta||_2^2 + c * max(Z_y - max_{i!=y} Z_i,
/// -confidence) by plain gradient descent in tanh space. Returns the
/// successful iterate with the smallest L2 distortion, else the final
/// iterate with success=false.
AttackResult cw_l2(const GradientOracle& oracle, const Tensor& x, int y, const CwConfig& cfg,
                   std::vector<CwIterate>* trace = nullptr);

enum class AttackKind { Fgsm, Mim, Pgd, CwL2 };

/// Union of the per-attack settings; only the member matching `kind` is read.
struct AttackConfig {
    AttackKind kind = AttackKind::Fgsm;
    FgsmConfig fgsm;
    MimConfig mim;
    PgdConfig pgd;
    CwConfig cw;
};

/// Dispatches on cfg.kind; rng feeds attacks that draw randomness.
AttackResult run_attack(const GradientOracle& oracle, const Tensor& x, int y,
                        const AttackConfig& cfg, Rng& rng);

/// Attacks every image independently. Image i draws from Rng(seed).child(i),
/// so output is identical for any worker count. Per-image failures are
/// collected and reported together with their indices.
std::vector<AttackResult> attack_batch(const GradientOracle& oracle,
                                       const std::vector<LabeledImage>& dataset,
                                       const AttackConfig& cfg, std::uint64_t seed, int workers);

}  // namespace signshield

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "signshield/attacks.hpp"
#include "signshield/dataset.hpp"
#include "signshield/hybrid.hpp"
#include "signshield/model.hpp"

namespace signshield {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::vector<std::vector<long long>> counts;

    ConfusionMatrix();
    long long total() const;
    long long trace() const;
    std::vector<long long> row_sums() const;
    std::vector<long long> col_sums() const;
    bool operator==(const ConfusionMatrix&) const = default;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long long support = 0;
    bool operator==(const ClassMetrics&) const = default;
};

enum class DefenseKind { None, Jpeg, Squeeze, Binary, Random, Hybrid };

std::string attack_name(const std::optional<AttackKind>& kind);
std::string defense_name(DefenseKind kind);
std::optional<AttackKind> attack_kind_from(const std::string& name);
DefenseKind defense_kind_from(const std::string& name);

struct RunMetadata {
    std::optional<AttackKind> attack;
    float epsilon = 0.0f;  // 0 when the attack has no budget parameter
    DefenseKind defense = DefenseKind::None;
    std::uint64_t seed = 0;
    bool operator==(const RunMetadata&) const = default;
};

struct EvaluationReport {
    std::vector<ClassMetrics> per_class;  // kClassCount entries
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    double accuracy = 0.0;
    ConfusionMatrix confusion;
    RunMetadata meta;
};

/// Per-class precision/recall/F1 with the zero-denominator convention
/// (undefined -> 0), support-weighted aggregates, and global accuracy.
/// pairs are (true label, predicted label).
EvaluationReport compute_metrics(const std::vector<std::pair<int, int>>& pairs);

/// Knobs for the non-hybrid input filters applied before classification.
struct DefenseParams {
    int jpeg_quality = 50;
    int squeeze_bits = 4;
    float crop_fraction = 0.94f;
    HybridConfig hybrid;
};

struct EvalConfig {
    std::optional<AttackKind> attack;  // nullopt = clean evaluation
    AttackConfig attack_params;        // kind field is overridden by `attack`
    DefenseKind defense = DefenseKind::None;
    DefenseParams defense_params;
    std::uint64_t seed = 0;
    int workers = 0;  // 0 = hardware concurrency
};

/// Budget recorded in report metadata: the epsilon of the selected attack,
/// 0 for C&W and clean runs.
float attack_epsilon(const EvalConfig& cfg);

/// Sets the L-inf budget of every budgeted attack in one go.
void set_attack_epsilon(AttackConfig& params, float epsilon);

/// Attacks are always generated against the undefended model A, then the
/// defense is applied to the adversarial image before classification
/// (model B participates only in the hybrid defense). Image i draws from
/// Rng(seed).child(i); results are identical for any worker count.
EvaluationReport evaluate(const TrainedModel& model_a, const TrainedModel& model_b,
                          const std::vector<LabeledImage>& dataset, const EvalConfig& cfg);

struct SweepCell {
    AttackKind attack;
    float epsilon = 0.0f;
    DefenseKind defense = DefenseKind::None;
    double accuracy = 0.0;
    bool operator==(const SweepCell&) const = default;
};

/// One accuracy per (attack, epsilon, defense), nested in that order.
struct SweepReport {
    std::vector<AttackKind> attacks;
    std::vector<float> epsilons;
    std::vector<DefenseKind> defenses;
    std::vector<SweepCell> cells;
    std::uint64_t seed = 0;
};

inline constexpr std::array<float, 3> kDefaultEpsilons{0.05f, 0.1f, 0.2f};

/// C&W carries no epsilon and is rejected here.
SweepReport sweep_epsilon(const TrainedModel& model_a, const TrainedModel& model_b,
                          const std::vector<LabeledImage>& dataset,
                          const std::vector<AttackKind>& attacks,
                          const std::vector<float>& epsilons,
                          const std::vector<DefenseKind>& defenses, std::uint64_t seed,
                          int workers = 0);

/// Per-class test supports of the 1451-sample reference benchmark split,
/// in class-id order.
extern const std::array<long long, kClassCount> kReferenceTestSupport;

/// report CSV: a `# attack=..,epsilon=..,defense=..,seed=..` metadata line,
/// a `class,precision,recall,f1,support` block (first report), then a
/// `defense,precision,recall,f1,accuracy` summary row per report in
/// argument order. Doubles print with enough digits to round trip exactly.
void write_report_csv(const std::vector<EvaluationReport>& reports, const std::string& path);
void write_report_markdown(const std::vector<EvaluationReport>& reports, const std::string& path);

/// Reads back the CSV-representable part: per-class block, first summary
/// row, and metadata. The confusion matrix lives in its own file.
EvaluationReport read_report_csv(const std::string& path);

/// Dispatches on format ("csv" or "markdown").
void emit_report(const EvaluationReport& report, const std::string& format,
                 const std::string& path);

void write_confusion_csv(const ConfusionMatrix& confusion, const std::string& path);
ConfusionMatrix read_confusion_csv(const std::string& path);

/// sweep CSV: `attack,epsilon,defense,accuracy` rows in cell order.
void write_sweep_csv(const SweepReport& report, const std::string& path);

}  // namespace signshield

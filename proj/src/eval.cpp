#include "signshield/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "signshield/errors.hpp"
#include "signshield/transforms.hpp"

namespace signshield {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_float(float v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string snake_name(int class_id) {
    std::string name = sign_classes()[static_cast<std::size_t>(class_id)].name;
    for (char& ch : name) {
        if (ch == ' ') ch = '_';
    }
    return name;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.push_back("");
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    return f;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::string metadata_line(const RunMetadata& meta) {
    return "# attack=" + attack_name(meta.attack) + ",epsilon=" + fmt_float(meta.epsilon) +
           ",defense=" + defense_name(meta.defense) + ",seed=" + std::to_string(meta.seed);
}

RunMetadata parse_metadata(const std::string& line) {
    RunMetadata meta;
    std::string body = line.substr(1);
    if (!body.empty() && body.front() == ' ') body = body.substr(1);
    for (const std::string& pair : split(body, ',')) {
        std::size_t eq = pair.find('=');
        if (eq == std::string::npos) throw FormatError("bad metadata field: " + pair);
        std::string key = pair.substr(0, eq);
        std::string value = pair.substr(eq + 1);
        if (key == "attack") {
            meta.attack = attack_kind_from(value);
        } else if (key == "epsilon") {
            meta.epsilon = std::stof(value);
        } else if (key == "defense") {
            meta.defense = defense_kind_from(value);
        } else if (key == "seed") {
            meta.seed = std::stoull(value);
        } else {
            throw FormatError("unknown metadata key: " + key);
        }
    }
    return meta;
}

EvaluationReport report_from_confusion(const ConfusionMatrix& cm) {
    EvaluationReport r;
    r.confusion = cm;
    r.per_class.resize(kClassCount);
    const std::vector<long long> rows = cm.row_sums();
    const std::vector<long long> cols = cm.col_sums();
    const long long total = cm.total();
    double wp = 0.0;
    double wr = 0.0;
    double wf = 0.0;
    for (int c = 0; c < kClassCount; ++c) {
        const long long diag = cm.counts[(std::size_t)c][(std::size_t)c];
        ClassMetrics& m = r.per_class[(std::size_t)c];
        m.support = rows[(std::size_t)c];
        m.precision = cols[(std::size_t)c] > 0 ? (double)diag / (double)cols[(std::size_t)c] : 0.0;
        m.recall = m.support > 0 ? (double)diag / (double)m.support : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        wp += (double)m.support * m.precision;
        wr += (double)m.support * m.recall;
        wf += (double)m.support * m.f1;
    }
    r.weighted_precision = wp / (double)total;
    r.weighted_recall = wr / (double)total;
    r.weighted_f1 = wf / (double)total;
    r.accuracy = (double)cm.trace() / (double)total;
    return r;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix()
    : counts(kClassCount, std::vector<long long>(kClassCount, 0)) {}

long long ConfusionMatrix::total() const {
    long long sum = 0;
    for (const auto& row : counts) {
        for (long long v : row) sum += v;
    }
    return sum;
}

long long ConfusionMatrix::trace() const {
    long long sum = 0;
    for (int c = 0; c < kClassCount; ++c) sum += counts[(std::size_t)c][(std::size_t)c];
    return sum;
}

std::vector<long long> ConfusionMatrix::row_sums() const {
    std::vector<long long> sums(kClassCount, 0);
    for (int r = 0; r < kClassCount; ++r) {
        for (long long v : counts[(std::size_t)r]) sums[(std::size_t)r] += v;
    }
    return sums;
}

std::vector<long long> ConfusionMatrix::col_sums() const {
    std::vector<long long> sums(kClassCount, 0);
    for (int r = 0; r < kClassCount; ++r) {
        for (int c = 0; c < kClassCount; ++c) sums[(std::size_t)c] += counts[(std::size_t)r][(std::size_t)c];
    }
    return sums;
}

std::string attack_name(const std::optional<AttackKind>& kind) {
    if (!kind.has_value()) return "none";
    switch (*kind) {
        case AttackKind::Fgsm:
            return "fgsm";
        case AttackKind::Mim:
            return "mim";
        case AttackKind::Pgd:
            return "pgd";
        case AttackKind::CwL2:
            return "cw";
    }
    throw ParamError("attack_name: unknown attack kind");
}

std::string defense_name(DefenseKind kind) {
    switch (kind) {
        case DefenseKind::None:
            return "none";
        case DefenseKind::Jpeg:
            return "jpeg";
        case DefenseKind::Squeeze:
            return "squeeze";
        case DefenseKind::Binary:
            return "binary";
        case DefenseKind::Random:
            return "random";
        case DefenseKind::Hybrid:
            return "hybrid";
    }
    throw ParamError("defense_name: unknown defense kind");
}

std::optional<AttackKind> attack_kind_from(const std::string& name) {
    if (name == "none") return std::nullopt;
    if (name == "fgsm") return AttackKind::Fgsm;
    if (name == "mim") return AttackKind::Mim;
    if (name == "pgd") return AttackKind::Pgd;
    if (name == "cw") return AttackKind::CwL2;
    throw ParamError("unknown attack kind: " + name);
}

DefenseKind defense_kind_from(const std::string& name) {
    if (name == "none") return DefenseKind::None;
    if (name == "jpeg") return DefenseKind::Jpeg;
    if (name == "squeeze") return DefenseKind::Squeeze;
    if (name == "binary") return DefenseKind::Binary;
    if (name == "random") return DefenseKind::Random;
    if (name == "hybrid") return DefenseKind::Hybrid;
    throw ParamError("unknown defense kind: " + name);
}

EvaluationReport compute_metrics(const std::vector<std::pair<int, int>>& pairs) {
    if (pairs.empty()) throw ParamError("compute_metrics: no samples");
    ConfusionMatrix cm;
    for (const auto& [t, p] : pairs) {
        if (t < 0 || t >= kClassCount) {
            throw LabelError("compute_metrics: true label out of range: " + std::to_string(t));
        }
        if (p < 0 || p >= kClassCount) {
            throw LabelError("compute_metrics: predicted label out of range: " + std::to_string(p));
        }
        ++cm.counts[(std::size_t)t][(std::size_t)p];
    }
    return report_from_confusion(cm);
}

float attack_epsilon(const EvalConfig& cfg) {
    if (!cfg.attack.has_value()) return 0.0f;
    switch (*cfg.attack) {
        case AttackKind::Fgsm:
            return cfg.attack_params.fgsm.epsilon;
        case AttackKind::Mim:
            return cfg.attack_params.mim.epsilon;
        case AttackKind::Pgd:
            return cfg.attack_params.pgd.epsilon;
        case AttackKind::CwL2:
            return 0.0f;
    }
    return 0.0f;
}

void set_attack_epsilon(AttackConfig& params, float epsilon) {
    params.fgsm.epsilon = epsilon;
    params.mim.epsilon = epsilon;
    params.pgd.epsilon = epsilon;
}

namespace {

int classify_defended(const Tensor& x, const TrainedModel& a, const TrainedModel& b,
                      const EvalConfig& cfg, const Rng& stream) {
    const DefenseParams& p = cfg.defense_params;
    switch (cfg.defense) {
        case DefenseKind::None:
            return predict(a, x).label;
        case DefenseKind::Jpeg:
            return predict(a, dct_quantize(x, p.jpeg_quality)).label;
        case DefenseKind::Squeeze:
            return predict(a, bit_squeeze(x, p.squeeze_bits)).label;
        case DefenseKind::Binary:
            return predict(a, binary_filter(x)).label;
        case DefenseKind::Random: {
            Rng rng = stream.child(1);
            return predict(a, random_crop_resize(x, p.crop_fraction, rng)).label;
        }
        case DefenseKind::Hybrid: {
            Rng rng = stream.child(2);
            return classify_hybrid(x, a, b, p.hybrid, rng).label;
        }
    }
    throw ParamError("evaluate: unknown defense kind");
}

}  // namespace

EvaluationReport evaluate(const TrainedModel& model_a, const TrainedModel& model_b,
                          const std::vector<LabeledImage>& dataset, const EvalConfig& cfg) {
    if (dataset.empty()) throw DataError("evaluate: empty dataset");
    int workers = cfg.workers > 0 ? cfg.workers : (int)std::thread::hardware_concurrency();
    if (workers < 1) workers = 1;

    const std::size_t n = dataset.size();
    std::vector<int> predicted(n, -1);
    std::vector<std::string> errors(n);
    std::atomic<std::size_t> next{0};
    const Rng master(cfg.seed);
    const ModelOracle oracle(model_a);
    AttackConfig attack_params = cfg.attack_params;
    if (cfg.attack.has_value()) attack_params.kind = *cfg.attack;
    const std::vector<int>& in_shape = model_a.net.input_shape;

    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                const LabeledImage& sample = dataset[i];
                if (sample.label < 0 || sample.label >= kClassCount) {
                    throw LabelError("label out of range: " + std::to_string(sample.label));
                }
                Rng stream = master.child(static_cast<std::uint64_t>(i));
                Tensor x = sample.image.shape == in_shape
                               ? sample.image
                               : bilinear_resize(sample.image, in_shape[0], in_shape[1]);
                if (cfg.attack.has_value()) {
                    Rng attack_rng = stream.child(0);
                    x = run_attack(oracle, x, sample.label, attack_params, attack_rng).adversarial;
                }
                predicted[i] = classify_defended(x, model_a, model_b, cfg, stream);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };

    const int thread_count =
        static_cast<int>(std::min<std::size_t>(std::min(workers, 64), std::max<std::size_t>(n, 1)));
    if (thread_count <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(thread_count));
        for (int t = 0; t < thread_count; ++t) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }

    std::string aggregate;
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) {
            if (!aggregate.empty()) aggregate += "; ";
            aggregate += "image " + std::to_string(i) + ": " + errors[i];
        }
    }
    if (!aggregate.empty()) throw Error("evaluate: " + aggregate);

    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(dataset[i].label, predicted[i]);
    EvaluationReport report = compute_metrics(pairs);
    report.meta.attack = cfg.attack;
    report.meta.epsilon = attack_epsilon(cfg);
    report.meta.defense = cfg.defense;
    report.meta.seed = cfg.seed;
    return report;
}

SweepReport sweep_epsilon(const TrainedModel& model_a, const TrainedModel& model_b,
                          const std::vector<LabeledImage>& dataset,
                          const std::vector<AttackKind>& attacks,
                          const std::vector<float>& epsilons,
                          const std::vector<DefenseKind>& defenses, std::uint64_t seed,
                          int workers) {
    if (attacks.empty()) throw ParamError("sweep_epsilon: no attacks");
    if (epsilons.empty()) throw ParamError("sweep_epsilon: no epsilon values");
    if (defenses.empty()) throw ParamError("sweep_epsilon: no defenses");
    for (AttackKind a : attacks) {
        if (a == AttackKind::CwL2) throw ParamError("sweep_epsilon: cw has no epsilon parameter");
    }
    for (float e : epsilons) {
        if (!(e > 0.0f)) throw ParamError("sweep_epsilon: epsilon must be positive");
    }

    SweepReport report;
    report.attacks = attacks;
    report.epsilons = epsilons;
    report.defenses = defenses;
    report.seed = seed;
    for (AttackKind attack : attacks) {
        for (float eps : epsilons) {
            for (DefenseKind defense : defenses) {
                EvalConfig cfg;
                cfg.attack = attack;
                set_attack_epsilon(cfg.attack_params, eps);
                cfg.defense = defense;
                cfg.seed = seed;
                cfg.workers = workers;
                const EvaluationReport r = evaluate(model_a, model_b, dataset, cfg);
                report.cells.push_back({attack, eps, defense, r.accuracy});
            }
        }
    }
    return report;
}

const std::array<long long, kClassCount> kReferenceTestSupport = {
    39, 114, 68, 62, 33, 88, 61, 60, 39, 68, 110, 92, 107, 171, 134, 79, 45, 81};

void write_report_csv(const std::vector<EvaluationReport>& reports, const std::string& path) {
    if (reports.empty()) throw ParamError("write_report_csv: no reports");
    std::ofstream f = open_out(path);
    const EvaluationReport& first = reports.front();
    f << metadata_line(first.meta) << "\n";
    f << "class,precision,recall,f1,support\n";
    for (int c = 0; c < kClassCount; ++c) {
        const ClassMetrics& m = first.per_class[(std::size_t)c];
        f << snake_name(c) << ',' << fmt_double(m.precision) << ',' << fmt_double(m.recall) << ','
          << fmt_double(m.f1) << ',' << m.support << "\n";
    }
    f << "\n";
    f << "defense,precision,recall,f1,accuracy\n";
    for (const EvaluationReport& r : reports) {
        f << defense_name(r.meta.defense) << ',' << fmt_double(r.weighted_precision) << ','
          << fmt_double(r.weighted_recall) << ',' << fmt_double(r.weighted_f1) << ','
          << fmt_double(r.accuracy) << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

EvaluationReport read_report_csv(const std::string& path) {
    const std::vector<std::string> lines = read_lines(path);
    EvaluationReport r;
    r.per_class.resize(kClassCount);
    bool in_classes = false;
    bool in_summary = false;
    bool have_summary = false;
    int class_rows = 0;
    for (const std::string& line : lines) {
        if (line.empty()) {
            in_classes = false;
            continue;
        }
        if (line.front() == '#') {
            r.meta = parse_metadata(line);
            continue;
        }
        if (line == "class,precision,recall,f1,support") {
            in_classes = true;
            in_summary = false;
            continue;
        }
        if (line == "defense,precision,recall,f1,accuracy") {
            in_summary = true;
            in_classes = false;
            continue;
        }
        const std::vector<std::string> fields = split(line, ',');
        if (in_classes) {
            if (fields.size() != 5) throw FormatError("bad class row: " + line);
            const int id = class_id_by_name(fields[0]);
            ClassMetrics& m = r.per_class[(std::size_t)id];
            m.precision = std::stod(fields[1]);
            m.recall = std::stod(fields[2]);
            m.f1 = std::stod(fields[3]);
            m.support = std::stoll(fields[4]);
            ++class_rows;
        } else if (in_summary && !have_summary) {
            if (fields.size() != 5) throw FormatError("bad summary row: " + line);
            if (defense_kind_from(fields[0]) != r.meta.defense) {
                throw FormatError("summary defense does not match metadata: " + line);
            }
            r.weighted_precision = std::stod(fields[1]);
            r.weighted_recall = std::stod(fields[2]);
            r.weighted_f1 = std::stod(fields[3]);
            r.accuracy = std::stod(fields[4]);
            have_summary = true;
        }
    }
    if (class_rows != kClassCount) throw FormatError("expected 18 class rows in " + path);
    if (!have_summary) throw FormatError("missing summary block in " + path);
    return r;
}

void write_report_markdown(const std::vector<EvaluationReport>& reports, const std::string& path) {
    if (reports.empty()) throw ParamError("write_report_markdown: no reports");
    std::ofstream f = open_out(path);
    const EvaluationReport& first = reports.front();
    f << "# Evaluation report\n\n";
    f << "- attack: " << attack_name(first.meta.attack) << "\n";
    f << "- epsilon: " << fmt_float(first.meta.epsilon) << "\n";
    f << "- seed: " << first.meta.seed << "\n\n";
    f << "| class | precision | recall | f1 | support |\n";
    f << "| --- | --- | --- | --- | --- |\n";
    for (int c = 0; c < kClassCount; ++c) {
        const ClassMetrics& m = first.per_class[(std::size_t)c];
        f << "| " << snake_name(c) << " | " << fmt_short(m.precision) << " | "
          << fmt_short(m.recall) << " | " << fmt_short(m.f1) << " | " << m.support << " |\n";
    }
    f << "\n| defense | precision | recall | f1 | accuracy |\n";
    f << "| --- | --- | --- | --- | --- |\n";
    for (const EvaluationReport& r : reports) {
        f << "| " << defense_name(r.meta.defense) << " | " << fmt_short(r.weighted_precision)
          << " | " << fmt_short(r.weighted_recall) << " | " << fmt_short(r.weighted_f1) << " | "
          << fmt_short(r.accuracy) << " |\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

void emit_report(const EvaluationReport& report, const std::string& format,
                 const std::string& path) {
    if (format == "csv") {
        write_report_csv({report}, path);
    } else if (format == "markdown" || format == "md") {
        write_report_markdown({report}, path);
    } else {
        throw ParamError("emit_report: unknown format " + format);
    }
}

void write_confusion_csv(const ConfusionMatrix& confusion, const std::string& path) {
    std::ofstream f = open_out(path);
    for (int r = 0; r < kClassCount; ++r) {
        for (int c = 0; c < kClassCount; ++c) {
            if (c) f << ',';
            f << confusion.counts[(std::size_t)r][(std::size_t)c];
        }
        f << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

ConfusionMatrix read_confusion_csv(const std::string& path) {
    const std::vector<std::string> lines = read_lines(path);
    std::vector<std::string> rows;
    for (const std::string& line : lines) {
        if (!line.empty()) rows.push_back(line);
    }
    if (rows.size() != (std::size_t)kClassCount) {
        throw FormatError("expected 18 confusion rows in " + path);
    }
    ConfusionMatrix cm;
    for (int r = 0; r < kClassCount; ++r) {
        const std::vector<std::string> fields = split(rows[(std::size_t)r], ',');
        if (fields.size() != (std::size_t)kClassCount) {
            throw FormatError("expected 18 confusion columns in " + path);
        }
        for (int c = 0; c < kClassCount; ++c) {
            const long long v = std::stoll(fields[(std::size_t)c]);
            if (v < 0) throw FormatError("negative confusion count in " + path);
            cm.counts[(std::size_t)r][(std::size_t)c] = v;
        }
    }
    return cm;
}

void write_sweep_csv(const SweepReport& report, const std::string& path) {
    std::ofstream f = open_out(path);
    f << "attack,epsilon,defense,accuracy\n";
    for (const SweepCell& cell : report.cells) {
        f << attack_name(cell.attack) << ',' << fmt_float(cell.epsilon) << ','
          << defense_name(cell.defense) << ',' << fmt_double(cell.accuracy) << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace signshield

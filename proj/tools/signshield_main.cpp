#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "signshield/attacks.hpp"
#include "signshield/config.hpp"
#include "signshield/dataset.hpp"
#include "signshield/errors.hpp"
#include "signshield/eval.hpp"
#include "signshield/featuremap.hpp"
#include "signshield/hybrid.hpp"
#include "signshield/model.hpp"
#include "signshield/ppm.hpp"
#include "signshield/transforms.hpp"

namespace fs = std::filesystem;
using namespace signshield;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::string snake(const std::string& name) {
    std::string out = name;
    for (char& ch : out) {
        if (ch == ' ') ch = '_';
    }
    return out;
}

std::string fmt_float(float v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

int default_workers() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// Applies --steps to whichever iteration knob the selected attack reads.
void apply_steps(AttackConfig& params, int steps) {
    if (steps <= 0) return;
    params.mim.steps = steps;
    params.pgd.steps = steps;
    params.cw.max_iterations = steps;
}

ModelArchitecture architecture_by_name(const std::string& name) {
    if (name == "a" || name == "A") return model_a_architecture();
    if (name == "b" || name == "B") return model_b_architecture();
    throw ParamError("unknown architecture: " + name + " (expected a or b)");
}

// ---- config file merging --------------------------------------------------

/// Splits raw args around the subcommand token and folds the config file in:
/// global keys become root tokens, everything else becomes subcommand tokens
/// placed before the user's own, so explicit flags win under TakeLast.
std::vector<std::string> merge_config(const std::vector<std::string>& raw) {
    std::string config_path;
    std::vector<std::string> rest;
    std::optional<std::size_t> subcmd_pos;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const std::string& tok = raw[i];
        if (tok == "--config") {
            if (i + 1 >= raw.size()) throw ParamError("--config requires a file");
            config_path = raw[++i];
            continue;
        }
        if (tok.rfind("--config=", 0) == 0) {
            config_path = tok.substr(9);
            continue;
        }
        rest.push_back(tok);
        if (!subcmd_pos.has_value() && !tok.empty() && tok.front() != '-') {
            const bool is_seed_value = rest.size() >= 2 && rest[rest.size() - 2] == "--seed";
            if (!is_seed_value) subcmd_pos = rest.size() - 1;
        }
    }
    if (config_path.empty()) return rest;

    std::vector<std::string> global_tokens;
    std::vector<std::string> sub_tokens;
    for (const auto& [key, value] : parse_config_file(config_path)) {
        if (key == "config") throw FormatError("config file cannot set config");
        std::string token = "--" + key + "=" + value;
        if (key == "seed") {
            global_tokens.push_back(token);
        } else {
            sub_tokens.push_back(token);
        }
    }

    std::vector<std::string> merged = global_tokens;
    if (subcmd_pos.has_value()) {
        merged.insert(merged.end(), rest.begin(), rest.begin() + (long)*subcmd_pos + 1);
        merged.insert(merged.end(), sub_tokens.begin(), sub_tokens.end());
        merged.insert(merged.end(), rest.begin() + (long)*subcmd_pos + 1, rest.end());
    } else {
        merged.insert(merged.end(), sub_tokens.begin(), sub_tokens.end());
        merged.insert(merged.end(), rest.begin(), rest.end());
    }
    return merged;
}

// ---- subcommand bodies ------------------------------------------------------

int cmd_gen_data(const std::string& out, int per_class, int extent, std::uint64_t seed) {
    auto data = generate_synthetic(seed, per_class, extent);
    save_dataset(out, data);
    std::printf("wrote %zu images to %s\n", data.size(), out.c_str());
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& arch_name, const std::string& out,
              const TrainConfig& cfg) {
    const ModelArchitecture arch = architecture_by_name(arch_name);
    auto data = load_directory(data_dir, arch.input_shape[0]);
    TrainReport report;
    TrainedModel model = train(data, arch, cfg, &report);
    save_model(model, out);
    for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
        std::printf("epoch %zu loss %.6f\n", e + 1, report.epoch_loss[e]);
    }
    std::printf("converged: %s\n", report.converged ? "yes" : "no");
    std::printf("saved model to %s\n", out.c_str());
    return 0;
}

int cmd_attack(const std::string& kind, float epsilon, int steps, const std::string& model_path,
               const std::string& data_dir, const std::string& out, std::uint64_t seed,
               int workers) {
    const std::optional<AttackKind> parsed = attack_kind_from(kind);
    if (!parsed.has_value()) throw ParamError("attack: kind must be one of fgsm|mim|pgd|cw");
    TrainedModel model = load_model(model_path);
    auto data = load_directory(data_dir, model.net.input_shape[0]);

    AttackConfig cfg;
    cfg.kind = *parsed;
    set_attack_epsilon(cfg, epsilon);
    apply_steps(cfg, steps);

    const ModelOracle oracle(model);
    auto results = attack_batch(oracle, data, cfg, seed, workers);

    fs::create_directories(out);
    std::string manifest = "index,true_label,adv_label,linf,l2,success\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "adv_%05zu.ppm", i);
        write_ppm((fs::path(out) / name).string(), results[i].adversarial);
        const int adv_label = predict(model, results[i].adversarial).label;
        manifest += std::to_string(i) + "," + std::to_string(data[i].label) + "," +
                    std::to_string(adv_label) + "," + fmt_float(results[i].linf_distortion) + "," +
                    fmt_float(results[i].l2_distortion) + "," +
                    (results[i].success ? "1" : "0") + "\n";
    }
    const std::string manifest_path = (fs::path(out) / "manifest.csv").string();
    std::ofstream f(manifest_path, std::ios::binary);
    if (!f) throw IoError("cannot write " + manifest_path);
    f << manifest;
    std::printf("attacked %zu images; manifest at %s\n", results.size(), manifest_path.c_str());
    return 0;
}

int cmd_filter(const std::string& kind, const std::string& in, const std::string& out, int quality,
               int bits, float fraction, std::uint64_t seed) {
    Tensor image = read_ppm(in);
    Tensor filtered;
    if (kind == "jpeg") {
        filtered = dct_quantize(image, quality);
    } else if (kind == "squeeze") {
        filtered = bit_squeeze(image, bits);
    } else if (kind == "binary") {
        filtered = binary_filter(image);
    } else if (kind == "random") {
        Rng rng(seed);
        filtered = random_crop_resize(image, fraction, rng);
    } else {
        throw ParamError("filter: kind must be one of jpeg|squeeze|binary|random");
    }
    write_ppm(out, filtered);
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_classify_plain(const std::string& model_path, const std::string& image_path) {
    TrainedModel model = load_model(model_path);
    Tensor image = read_ppm(image_path);
    const Prediction pred = predict_resized(model, image);
    nlohmann::json j;
    j["label"] = snake(sign_classes()[(std::size_t)pred.label].name);
    j["label_id"] = pred.label;
    std::printf("%s\n", j.dump().c_str());
    return 0;
}

int cmd_classify_hybrid(const std::string& model_a_path, const std::string& model_b_path,
                        const std::string& image_path, std::uint64_t seed) {
    TrainedModel a = load_model(model_a_path);
    TrainedModel b = load_model(model_b_path);
    const Tensor original = read_ppm(image_path);
    Tensor image = original;
    if (image.shape != a.net.input_shape) {
        image = bilinear_resize(image, a.net.input_shape[0], a.net.input_shape[1]);
    }
    HybridConfig cfg;
    cfg.seed = seed;
    Rng rng(seed);
    // Text detection reads the native-resolution image; the crop votes see
    // the model-sized resize.
    const PipelineDecision d = classify_hybrid(
        image, a, b, cfg, rng, [&](const Tensor&) { return feature_label(original); });
    nlohmann::json j;
    j["label"] = snake(sign_classes()[(std::size_t)d.label].name);
    j["stage"] = stage_name(d.stage);
    j["attack_detected"] = d.attack_detected;
    j["tally"] = d.tally;
    std::printf("%s\n", j.dump().c_str());
    return 0;
}

int cmd_ocr(const std::string& image_path) {
    Tensor image = read_ppm(image_path);
    const auto words = detect_text(image);
    for (const WordDetection& w : words) {
        std::printf("word %s score %.3f at row %d col %d size %dx%d\n", w.word.c_str(),
                    (double)w.score, w.region.row, w.region.col, w.region.height, w.region.width);
    }
    const auto label = feature_label(image);
    if (label.has_value()) {
        std::printf("label: %s\n", snake(sign_classes()[(std::size_t)*label].name).c_str());
    } else {
        std::printf("label: none\n");
    }
    return 0;
}

int cmd_eval(const std::string& model_a_path, const std::string& model_b_path,
             const std::string& data_dir, const std::string& attack, float epsilon, int steps,
             const std::string& defense_list, const std::string& out, std::uint64_t seed,
             int workers) {
    TrainedModel a = load_model(model_a_path);
    const std::vector<std::string> defense_names = split_list(defense_list);
    if (defense_names.empty()) throw ParamError("eval: no defenses given");
    std::vector<DefenseKind> defenses;
    for (const std::string& name : defense_names) defenses.push_back(defense_kind_from(name));

    const bool needs_b =
        std::find(defenses.begin(), defenses.end(), DefenseKind::Hybrid) != defenses.end();
    if (needs_b && model_b_path.empty()) throw ParamError("eval: hybrid defense needs --modelB");
    TrainedModel b = model_b_path.empty() ? a : load_model(model_b_path);

    auto data = load_directory(data_dir, a.net.input_shape[0]);

    std::vector<EvaluationReport> reports;
    for (DefenseKind defense : defenses) {
        EvalConfig cfg;
        cfg.attack = attack_kind_from(attack);
        set_attack_epsilon(cfg.attack_params, epsilon);
        apply_steps(cfg.attack_params, steps);
        cfg.defense = defense;
        cfg.seed = seed;
        cfg.workers = workers;
        reports.push_back(evaluate(a, b, data, cfg));
        std::printf("defense %s accuracy %.4f\n", defense_name(defense).c_str(),
                    reports.back().accuracy);
    }

    fs::create_directories(out);
    write_report_csv(reports, (fs::path(out) / "report.csv").string());
    write_report_markdown(reports, (fs::path(out) / "report.md").string());
    write_confusion_csv(reports.front().confusion, (fs::path(out) / "confusion.csv").string());
    std::printf("reports written to %s\n", out.c_str());
    return 0;
}

int cmd_sweep(const std::string& model_a_path, const std::string& model_b_path,
              const std::string& data_dir, const std::string& attack_list,
              const std::string& eps_list, const std::string& defense_list, const std::string& out,
              std::uint64_t seed, int workers) {
    TrainedModel a = load_model(model_a_path);
    TrainedModel b = model_b_path.empty() ? a : load_model(model_b_path);

    std::vector<AttackKind> attacks;
    for (const std::string& name : split_list(attack_list)) {
        const auto kind = attack_kind_from(name);
        if (!kind.has_value()) throw ParamError("sweep: 'none' is not a sweepable attack");
        attacks.push_back(*kind);
    }
    std::vector<float> epsilons;
    for (const std::string& text : split_list(eps_list)) epsilons.push_back(std::stof(text));
    std::vector<DefenseKind> defenses;
    for (const std::string& name : split_list(defense_list)) {
        defenses.push_back(defense_kind_from(name));
    }
    if (std::find(defenses.begin(), defenses.end(), DefenseKind::Hybrid) != defenses.end() &&
        model_b_path.empty()) {
        throw ParamError("sweep: hybrid defense needs --modelB");
    }

    auto data = load_directory(data_dir, a.net.input_shape[0]);
    const SweepReport report = sweep_epsilon(a, b, data, attacks, epsilons, defenses, seed, workers);
    for (const SweepCell& cell : report.cells) {
        std::printf("%s eps %.3f %s accuracy %.4f\n", attack_name(cell.attack).c_str(),
                    (double)cell.epsilon, defense_name(cell.defense).c_str(), cell.accuracy);
    }
    fs::create_directories(out);
    write_sweep_csv(report, (fs::path(out) / "sweep.csv").string());
    std::printf("sweep written to %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"signshield: traffic-sign adversarial robustness toolkit"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(0, 1);

    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "master random seed");
    // --config is consumed before parsing; this registration documents it.
    std::string config_doc;
    app.add_option("--config", config_doc, "key = value file; explicit flags override");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "render a synthetic labeled dataset");
    gen->fallthrough();
    std::string gen_out;
    int gen_per_class = 50;
    int gen_extent = 64;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--per-class", gen_per_class, "images per class");
    gen->add_option("--extent", gen_extent, "square image extent (>= 48)");

    // train
    auto* tr = app.add_subcommand("train", "train a classifier on a dataset directory");
    tr->fallthrough();
    std::string tr_data;
    std::string tr_arch = "a";
    std::string tr_out;
    TrainConfig tr_cfg;
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--arch", tr_arch, "architecture: a or b");
    tr->add_option("--out", tr_out, "output weight file")->required();
    tr->add_option("--epochs", tr_cfg.epochs, "training epochs");
    tr->add_option("--batch", tr_cfg.batch_size, "minibatch size");
    tr->add_option("--lr", tr_cfg.learning_rate, "learning rate");
    tr->add_option("--crop", tr_cfg.crop_fraction, "augmentation crop fraction");

    // attack
    auto* at = app.add_subcommand("attack", "generate adversarial images");
    at->fallthrough();
    std::string at_kind;
    float at_eps = 0.1f;
    int at_steps = 0;
    std::string at_model;
    std::string at_data;
    std::string at_out;
    int at_workers = default_workers();
    at->add_option("--kind", at_kind, "fgsm|mim|pgd|cw")->required();
    at->add_option("--epsilon", at_eps, "L-inf budget");
    at->add_option("--steps", at_steps, "iteration count (0 = per-attack default)");
    at->add_option("--model", at_model, "weight file")->required();
    at->add_option("--data", at_data, "dataset directory")->required();
    at->add_option("--out", at_out, "output directory")->required();
    at->add_option("--workers", at_workers, "parallel workers");

    // filter
    auto* fi = app.add_subcommand("filter", "apply an input transform to one image");
    fi->fallthrough();
    std::string fi_kind;
    std::string fi_in;
    std::string fi_out;
    int fi_quality = 50;
    int fi_bits = 4;
    float fi_fraction = 0.94f;
    fi->add_option("--kind", fi_kind, "jpeg|squeeze|binary|random")->required();
    fi->add_option("--in", fi_in, "input PPM")->required();
    fi->add_option("--out", fi_out, "output PPM")->required();
    fi->add_option("--quality", fi_quality, "jpeg quality");
    fi->add_option("--bits", fi_bits, "squeeze bit depth");
    fi->add_option("--fraction", fi_fraction, "random crop fraction");

    // classify
    auto* cl = app.add_subcommand("classify", "classify one image");
    cl->fallthrough();
    bool cl_hybrid = false;
    std::string cl_model;
    std::string cl_model_a;
    std::string cl_model_b;
    std::string cl_image;
    cl->add_flag("--hybrid", cl_hybrid, "run the hybrid defense pipeline");
    cl->add_option("--model", cl_model, "weight file (plain classify)");
    cl->add_option("--modelA", cl_model_a, "model A weight file (hybrid)");
    cl->add_option("--modelB", cl_model_b, "model B weight file (hybrid)");
    cl->add_option("--image", cl_image, "input PPM")->required();

    // ocr
    auto* oc = app.add_subcommand("ocr", "print text detections for one image");
    oc->fallthrough();
    std::string oc_image;
    oc->add_option("--image", oc_image, "input PPM")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate defenses under one attack setting");
    ev->fallthrough();
    std::string ev_model_a;
    std::string ev_model_b;
    std::string ev_data;
    std::string ev_attack = "none";
    float ev_eps = 0.1f;
    int ev_steps = 0;
    std::string ev_defense = "none";
    std::string ev_out;
    int ev_workers = default_workers();
    ev->add_option("--modelA", ev_model_a, "model A weight file")->required();
    ev->add_option("--modelB", ev_model_b, "model B weight file (hybrid defense)");
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--attack", ev_attack, "none|fgsm|mim|pgd|cw");
    ev->add_option("--epsilon", ev_eps, "L-inf budget");
    ev->add_option("--steps", ev_steps, "attack iterations (0 = default)");
    ev->add_option("--defense", ev_defense, "comma list of none|jpeg|squeeze|binary|random|hybrid");
    ev->add_option("--out", ev_out, "report directory")->required();
    ev->add_option("--workers", ev_workers, "parallel workers");

    // sweep
    auto* sw = app.add_subcommand("sweep", "accuracy over an epsilon grid");
    sw->fallthrough();
    std::string sw_model_a;
    std::string sw_model_b;
    std::string sw_data;
    std::string sw_attacks = "fgsm,mim,pgd";
    std::string sw_eps = "0.05,0.1,0.2";
    std::string sw_defense = "none,random,hybrid";
    std::string sw_out;
    int sw_workers = default_workers();
    sw->add_option("--modelA", sw_model_a, "model A weight file")->required();
    sw->add_option("--modelB", sw_model_b, "model B weight file (hybrid defense)");
    sw->add_option("--data", sw_data, "dataset directory")->required();
    sw->add_option("--attacks", sw_attacks, "comma list of fgsm|mim|pgd");
    sw->add_option("--eps", sw_eps, "comma list of epsilon values");
    sw->add_option("--defense", sw_defense, "comma list of defense kinds");
    sw->add_option("--out", sw_out, "report directory")->required();
    sw->add_option("--workers", sw_workers, "parallel workers");

    std::vector<std::string> merged;
    try {
        merged = merge_config(std::vector<std::string>(argv + 1, argv + argc));
    } catch (const ParamError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }

    try {
        std::reverse(merged.begin(), merged.end());
        app.parse(std::move(merged));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_per_class, gen_extent, seed);
        if (tr->parsed()) {
            tr_cfg.seed = seed;
            return cmd_train(tr_data, tr_arch, tr_out, tr_cfg);
        }
        if (at->parsed()) {
            return cmd_attack(at_kind, at_eps, at_steps, at_model, at_data, at_out, seed,
                              at_workers);
        }
        if (fi->parsed()) {
            return cmd_filter(fi_kind, fi_in, fi_out, fi_quality, fi_bits, fi_fraction, seed);
        }
        if (cl->parsed()) {
            if (cl_hybrid) {
                if (cl_model_a.empty() || cl_model_b.empty()) {
                    throw ParamError("classify --hybrid needs --modelA and --modelB");
                }
                return cmd_classify_hybrid(cl_model_a, cl_model_b, cl_image, seed);
            }
            if (cl_model.empty()) throw ParamError("classify needs --model");
            return cmd_classify_plain(cl_model, cl_image);
        }
        if (oc->parsed()) return cmd_ocr(oc_image);
        if (ev->parsed()) {
            return cmd_eval(ev_model_a, ev_model_b, ev_data, ev_attack, ev_eps, ev_steps,
                            ev_defense, ev_out, seed, ev_workers);
        }
        if (sw->parsed()) {
            return cmd_sweep(sw_model_a, sw_model_b, sw_data, sw_attacks, sw_eps, sw_defense,
                             sw_out, seed, sw_workers);
        }
        std::printf("%s\n", app.help().c_str());
        return 0;
    } catch (const ParamError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
}

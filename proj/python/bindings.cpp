#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "signshield/attacks.hpp"
#include "signshield/dataset.hpp"
#include "signshield/errors.hpp"
#include "signshield/eval.hpp"
#include "signshield/featuremap.hpp"
#include "signshield/hybrid.hpp"
#include "signshield/model.hpp"
#include "signshield/rng.hpp"
#include "signshield/tensor.hpp"
#include "signshield/transforms.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace signshield;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
    std::vector<int> shape(a.ndim());
    for (py::ssize_t d = 0; d < a.ndim(); ++d) shape[static_cast<std::size_t>(d)] =
        static_cast<int>(a.shape(d));
    std::vector<float> data(a.data(), a.data() + a.size());
    return Tensor(shape, std::move(data));
}

py::array_t<float> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<float> out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

std::vector<LabeledImage> to_dataset(const py::sequence& seq) {
    std::vector<LabeledImage> out;
    for (const auto& item : seq) {
        auto pair = item.cast<py::sequence>();
        out.push_back({to_tensor(pair[0].cast<FloatArray>()), pair[1].cast<int>()});
    }
    return out;
}

py::list from_dataset(const std::vector<LabeledImage>& data) {
    py::list out;
    for (const auto& li : data) out.append(py::make_tuple(to_array(li.image), li.label));
    return out;
}

AttackConfig make_attack_config(const std::string& kind, float epsilon, int steps) {
    const std::optional<AttackKind> k = attack_kind_from(kind);
    if (!k) throw ParamError("attack: expected fgsm, mim, pgd, or cw");
    AttackConfig cfg;
    cfg.kind = *k;
    set_attack_epsilon(cfg, epsilon);
    if (steps > 0) {
        cfg.mim.steps = steps;
        cfg.pgd.steps = steps;
        cfg.cw.max_iterations = steps;
    }
    return cfg;
}

ModelArchitecture architecture_by_name(const std::string& arch) {
    if (arch == "a" || arch == "A") return model_a_architecture();
    if (arch == "b" || arch == "B") return model_b_architecture();
    throw ParamError("arch: expected 'a' or 'b'");
}

py::dict report_dict(const EvaluationReport& rep) {
    py::list per_class;
    for (int cl = 0; cl < kClassCount; ++cl) {
        const ClassMetrics& pc = rep.per_class[static_cast<std::size_t>(cl)];
        per_class.append(py::dict("label"_a = cl, "name"_a = sign_classes()[cl].name,
                                  "precision"_a = pc.precision, "recall"_a = pc.recall,
                                  "f1"_a = pc.f1, "support"_a = pc.support));
    }
    py::array_t<long long> confusion({kClassCount, kClassCount});
    auto view = confusion.mutable_unchecked<2>();
    for (int r = 0; r < kClassCount; ++r) {
        for (int col = 0; col < kClassCount; ++col) {
            view(r, col) = rep.confusion.counts[static_cast<std::size_t>(r)]
                                               [static_cast<std::size_t>(col)];
        }
    }
    return py::dict("per_class"_a = per_class, "weighted_precision"_a = rep.weighted_precision,
                    "weighted_recall"_a = rep.weighted_recall, "weighted_f1"_a = rep.weighted_f1,
                    "accuracy"_a = rep.accuracy, "confusion"_a = confusion,
                    "attack"_a = attack_name(rep.meta.attack), "epsilon"_a = rep.meta.epsilon,
                    "defense"_a = defense_name(rep.meta.defense), "seed"_a = rep.meta.seed);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "signshield core bindings";
    m.attr("__version__") = "0.1.0";
    m.attr("CLASS_COUNT") = kClassCount;

    py::class_<TrainedModel>(m, "Model")
        .def_property_readonly("arch",
                               [](const TrainedModel& model) {
                                   return model.arch_id == ArchId::MODEL_A ? "a" : "b";
                               })
        .def_property_readonly("train_seed",
                               [](const TrainedModel& model) { return model.train_seed; })
        .def_property_readonly("input_shape",
                               [](const TrainedModel& model) { return model.net.input_shape; });

    // dataset -----------------------------------------------------------
    m.def("sign_classes", [] {
        py::list out;
        for (const SignClass& sc : sign_classes()) {
            out.append(py::dict("id"_a = sc.id, "name"_a = sc.name, "has_text"_a = sc.has_text,
                                "words"_a = sc.words));
        }
        return out;
    });
    m.def("class_id_by_name", &class_id_by_name, "name"_a);
    m.def(
        "render_sign",
        [](int class_id, int extent, std::uint64_t seed) {
            Rng rng(seed);
            return to_array(render_sign(class_id, extent, rng));
        },
        "class_id"_a, "extent"_a = 64, "seed"_a = 0);
    m.def(
        "generate_synthetic",
        [](std::uint64_t seed, int per_class, int extent) {
            return from_dataset(generate_synthetic(seed, per_class, extent));
        },
        "seed"_a, "per_class"_a, "extent"_a = 64);
    m.def(
        "load_directory",
        [](const std::string& root, int extent) { return from_dataset(load_directory(root, extent)); },
        "root"_a, "extent"_a = 64);
    m.def(
        "save_dataset",
        [](const std::string& root, const py::sequence& dataset) {
            save_dataset(root, to_dataset(dataset));
        },
        "root"_a, "dataset"_a);
    m.def(
        "split_dataset",
        [](const py::sequence& dataset, double train_fraction, std::uint64_t seed) {
            DatasetSplit sp = split(to_dataset(dataset), train_fraction, seed);
            return py::make_tuple(from_dataset(sp.train), from_dataset(sp.test));
        },
        "dataset"_a, "train_fraction"_a = 0.8, "seed"_a = 0);

    // model -------------------------------------------------------------
    m.def(
        "train",
        [](const py::sequence& dataset, const std::string& arch, int epochs, int batch_size,
           float learning_rate, float crop_fraction, std::uint64_t seed) {
            const std::vector<LabeledImage> data = to_dataset(dataset);
            const ModelArchitecture spec = architecture_by_name(arch);
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.learning_rate = learning_rate;
            cfg.crop_fraction = crop_fraction;
            cfg.seed = seed;
            py::gil_scoped_release release;
            return train(data, spec, cfg);
        },
        "dataset"_a, "arch"_a = "a", "epochs"_a = 40, "batch_size"_a = 8,
        "learning_rate"_a = 0.05f, "crop_fraction"_a = 0.9f, "seed"_a = 0);
    m.def(
        "predict",
        [](const TrainedModel& model, const FloatArray& image) {
            const Prediction p = predict_resized(model, to_tensor(image));
            return py::make_tuple(p.label, to_array(p.logits));
        },
        "model"_a, "image"_a, "resizes to the model extent, returns (label, logits)");
    m.def("save_model", &save_model, "model"_a, "path"_a);
    m.def("load_model", &load_model, "path"_a);

    // transforms ----------------------------------------------------------
    m.def(
        "bilinear_resize",
        [](const FloatArray& image, int height, int width) {
            return to_array(bilinear_resize(to_tensor(image), height, width));
        },
        "image"_a, "height"_a, "width"_a);
    m.def(
        "random_crop_resize",
        [](const FloatArray& image, float fraction, std::uint64_t seed) {
            Rng rng(seed);
            return to_array(random_crop_resize(to_tensor(image), fraction, rng));
        },
        "image"_a, "fraction"_a = 0.94f, "seed"_a = 0);
    m.def(
        "bit_squeeze",
        [](const FloatArray& image, int bits) { return to_array(bit_squeeze(to_tensor(image), bits)); },
        "image"_a, "bits"_a = 4);
    m.def(
        "binary_filter",
        [](const FloatArray& image) { return to_array(binary_filter(to_tensor(image))); },
        "image"_a);
    m.def(
        "dct_quantize",
        [](const FloatArray& image, int quality) {
            return to_array(dct_quantize(to_tensor(image), quality));
        },
        "image"_a, "quality"_a = 50);

    // attacks -------------------------------------------------------------
    m.def(
        "attack",
        [](const TrainedModel& model, const FloatArray& image, int label, const std::string& kind,
           float epsilon, int steps, std::uint64_t seed) {
            const Tensor x = to_tensor(image);
            const AttackConfig cfg = make_attack_config(kind, epsilon, steps);
            AttackResult r;
            {
                py::gil_scoped_release release;
                ModelOracle oracle(model);
                Rng rng(seed);
                r = run_attack(oracle, x, label, cfg, rng);
            }
            return py::dict("adversarial"_a = to_array(r.adversarial), "success"_a = r.success,
                            "linf"_a = r.linf_distortion, "l2"_a = r.l2_distortion,
                            "iterations"_a = r.iterations);
        },
        "model"_a, "image"_a, "label"_a, "kind"_a = "fgsm", "epsilon"_a = 0.1f, "steps"_a = 0,
        "seed"_a = 0);

    // feature map -----------------------------------------------------------
    m.def("detect_text", [](const FloatArray& image) {
        py::list out;
        for (const WordDetection& d : detect_text(to_tensor(image))) {
            out.append(py::dict("word"_a = d.word, "score"_a = d.score, "row"_a = d.region.row,
                                "col"_a = d.region.col, "height"_a = d.region.height,
                                "width"_a = d.region.width));
        }
        return out;
    });
    m.def("feature_label",
          [](const FloatArray& image) { return feature_label(to_tensor(image)); });

    // hybrid pipeline -------------------------------------------------------
    m.def(
        "ensemble_vote",
        [](const std::vector<int>& labels, std::uint64_t seed) {
            Rng rng(seed);
            return ensemble_vote(labels, rng);
        },
        "labels"_a, "seed"_a = 0);
    m.def(
        "classify_hybrid",
        [](const FloatArray& image, const TrainedModel& model_a, const TrainedModel& model_b,
           int m_, int n, float crop_fraction, std::uint64_t seed) {
            const Tensor x = to_tensor(image);
            HybridConfig cfg;
            cfg.m = m_;
            cfg.n = n;
            cfg.crop_fraction = crop_fraction;
            cfg.seed = seed;
            PipelineDecision d;
            {
                py::gil_scoped_release release;
                Rng rng(seed);
                d = classify_hybrid(x, model_a, model_b, cfg, rng);
            }
            return py::dict("label"_a = d.label, "stage"_a = stage_name(d.stage),
                            "attack_detected"_a = d.attack_detected, "tally"_a = d.tally,
                            "feature_label"_a = d.feature_label);
        },
        "image"_a, "model_a"_a, "model_b"_a, "m"_a = 8, "n"_a = 10, "crop_fraction"_a = 0.94f,
        "seed"_a = 0);

    // evaluation ------------------------------------------------------------
    m.def("compute_metrics", [](const std::vector<std::pair<int, int>>& pairs) {
        return report_dict(compute_metrics(pairs));
    });
    m.def(
        "evaluate",
        [](const TrainedModel& model_a, const TrainedModel& model_b, const py::sequence& dataset,
           const std::string& attack, float epsilon, const std::string& defense,
           std::uint64_t seed, int workers) {
            const std::vector<LabeledImage> data = to_dataset(dataset);
            EvalConfig cfg;
            cfg.attack = attack_kind_from(attack);
            set_attack_epsilon(cfg.attack_params, epsilon);
            cfg.defense = defense_kind_from(defense);
            cfg.seed = seed;
            cfg.workers = workers;
            EvaluationReport rep;
            {
                py::gil_scoped_release release;
                rep = evaluate(model_a, model_b, data, cfg);
            }
            return report_dict(rep);
        },
        "model_a"_a, "model_b"_a, "dataset"_a, "attack"_a = "none", "epsilon"_a = 0.1f,
        "defense"_a = "none", "seed"_a = 0, "workers"_a = 0);
    m.def(
        "sweep",
        [](const TrainedModel& model_a, const TrainedModel& model_b, const py::sequence& dataset,
           const std::vector<std::string>& attacks, const std::vector<float>& epsilons,
           const std::vector<std::string>& defenses, std::uint64_t seed, int workers) {
            const std::vector<LabeledImage> data = to_dataset(dataset);
            std::vector<AttackKind> kinds;
            for (const std::string& name : attacks) {
                const std::optional<AttackKind> k = attack_kind_from(name);
                if (!k) throw ParamError("sweep: '" + name + "' is not a budgeted attack");
                kinds.push_back(*k);
            }
            std::vector<DefenseKind> shields;
            for (const std::string& name : defenses) shields.push_back(defense_kind_from(name));
            SweepReport rep;
            {
                py::gil_scoped_release release;
                rep = sweep_epsilon(model_a, model_b, data, kinds, epsilons, shields, seed,
                                    workers);
            }
            py::list out;
            for (const SweepCell& cell : rep.cells) {
                out.append(py::dict("attack"_a = attack_name(cell.attack),
                                    "epsilon"_a = cell.epsilon,
                                    "defense"_a = defense_name(cell.defense),
                                    "accuracy"_a = cell.accuracy));
            }
            return out;
        },
        "model_a"_a, "model_b"_a, "dataset"_a, "attacks"_a, "epsilons"_a, "defenses"_a,
        "seed"_a = 0, "workers"_a = 0);
}

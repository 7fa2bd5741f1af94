#include "signshield/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <utility>

#include "signshield/errors.hpp"
#include "signshield/transforms.hpp"

namespace signshield {

ModelArchitecture model_a_architecture() {
    ModelArchitecture arch;
    arch.id = ArchId::MODEL_A;
    arch.input_shape = {64, 64, 3};
    arch.layers = {
        LayerSpec::conv2d(3, 16, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
        LayerSpec::conv2d(3, 32, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
        LayerSpec::conv2d(3, 64, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
        LayerSpec::flatten(),           LayerSpec::dense(128),
        LayerSpec::relu(),              LayerSpec::dense(kClassCount),
    };
    return arch;
}

ModelArchitecture model_b_architecture() {
    ModelArchitecture arch;
    arch.id = ArchId::MODEL_B;
    arch.input_shape = {56, 56, 3};
    arch.layers = {
        LayerSpec::conv2d(3, 16, 1, 1),  // 0
        LayerSpec::relu(),               // 1
        LayerSpec::maxpool2d(2, 2),      // 2: 28x28x16
        LayerSpec::conv2d(3, 16, 1, 1),  // 3
        LayerSpec::relu(),               // 4
        LayerSpec::conv2d(3, 16, 1, 1),  // 5
        LayerSpec::residual_add(2),      // 6
        LayerSpec::relu(),               // 7
        LayerSpec::maxpool2d(2, 2),      // 8: 14x14x16
        LayerSpec::conv2d(3, 16, 1, 1),  // 9
        LayerSpec::relu(),               // 10
        LayerSpec::conv2d(3, 16, 1, 1),  // 11
        LayerSpec::residual_add(8),      // 12
        LayerSpec::relu(),               // 13
        LayerSpec::maxpool2d(2, 2),      // 14: 7x7x16
        LayerSpec::flatten(),            // 15
        LayerSpec::dense(64),            // 16
        LayerSpec::relu(),               // 17
        LayerSpec::dense(kClassCount),   // 18
    };
    return arch;
}

ModelArchitecture architecture_for(ArchId id) {
    return id == ArchId::MODEL_A ? model_a_architecture() : model_b_architecture();
}

TrainedModel train(const std::vector<LabeledImage>& dataset, const ModelArchitecture& arch,
                   const TrainConfig& cfg, TrainReport* report) {
    if (dataset.empty()) throw DataError("train: empty dataset");
    if (cfg.epochs < 1) throw ParamError("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw ParamError("train: batch size must be >= 1");
    if (!(cfg.crop_fraction > 0.0f && cfg.crop_fraction <= 1.0f)) {
        throw ParamError("train: crop fraction must be in (0, 1]");
    }
    if (!(cfg.learning_rate > 0.0f)) throw ParamError("train: learning rate must be positive");

    const int h = arch.input_shape[0];
    const int w = arch.input_shape[1];
    std::vector<Tensor> inputs;
    std::vector<int> labels;
    inputs.reserve(dataset.size());
    labels.reserve(dataset.size());
    for (const LabeledImage& im : dataset) {
        if (im.label < 0 || im.label >= kClassCount) {
            throw LabelError("train: label " + std::to_string(im.label) + " outside [0, " +
                             std::to_string(kClassCount) + ")");
        }
        if (im.image.rank() != 3 || im.image.channels() != 3) {
            throw ShapeError("train: images must be {H,W,3}, got " +
                             shape_to_string(im.image.shape));
        }
        inputs.push_back(im.image.height() == h && im.image.width() == w
                             ? im.image
                             : bilinear_resize(im.image, h, w));
        labels.push_back(im.label);
    }

    TrainedModel model;
    model.arch_id = arch.id;
    model.train_seed = cfg.seed;
    model.net.input_shape = arch.input_shape;
    model.net.layers = arch.layers;
    model.net.weights = make_zero_weights(arch.input_shape, arch.layers);

    Rng master(cfg.seed);
    Rng init_rng = master.child(0);
    Rng shuffle_rng = master.child(1);
    Rng aug_rng = master.child(2);
    init_weights(model.net, init_rng);

    const std::size_t n = inputs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<double> epoch_loss;
    epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));
    std::vector<LayerWeights> grad_sum = make_zero_weights(arch.input_shape, arch.layers);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates from the shuffle stream.
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = shuffle_rng.uniform_int(static_cast<std::uint64_t>(i));
            std::swap(order[i - 1], order[j]);
        }
        double loss_sum = 0.0;
        std::size_t start = 0;
        while (start < n) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t batch = stop - start;
            for (LayerWeights& g : grad_sum) {
                std::fill(g.kernel.data.begin(), g.kernel.data.end(), 0.0f);
                std::fill(g.bias.data.begin(), g.bias.data.end(), 0.0f);
            }
            for (std::size_t i = start; i < stop; ++i) {
                const std::size_t idx = order[i];
                const Tensor aug = random_crop_resize(inputs[idx], cfg.crop_fraction, aug_rng);
                BackpropResult res = backprop(model.net, aug, labels[idx], true);
                loss_sum += res.loss;
                for (std::size_t l = 0; l < grad_sum.size(); ++l) {
                    LayerWeights& g = grad_sum[l];
                    const LayerWeights& src = res.grad_weights[l];
                    for (std::size_t e = 0; e < g.kernel.data.size(); ++e) {
                        g.kernel.data[e] += src.kernel.data[e];
                    }
                    for (std::size_t e = 0; e < g.bias.data.size(); ++e) {
                        g.bias.data[e] += src.bias.data[e];
                    }
                }
            }
            sgd_step(model.net, grad_sum, cfg.learning_rate / static_cast<float>(batch));
            start = stop;
        }
        epoch_loss.push_back(loss_sum / static_cast<double>(n));
    }

    bool converged = true;
    const std::size_t e = epoch_loss.size();
    for (std::size_t i = (e > 3 ? e - 3 : 1); i < e; ++i) {
        if (epoch_loss[i] > epoch_loss[i - 1]) converged = false;
    }
    if (report != nullptr) {
        report->epoch_loss = epoch_loss;
        report->converged = converged;
    }
    for (const LayerWeights& lw : model.net.weights) {
        require_finite(lw.kernel, "trained kernel");
        require_finite(lw.bias, "trained bias");
    }
    return model;
}

Prediction predict(const TrainedModel& model, const Tensor& x) {
    Prediction out;
    out.logits = forward(model.net, x);
    out.label = 0;
    for (int i = 1; i < static_cast<int>(out.logits.size()); ++i) {
        if (out.logits.at(i) > out.logits.at(out.label)) out.label = i;
    }
    return out;
}

Prediction predict_resized(const TrainedModel& model, const Tensor& x) {
    const int h = model.net.input_shape[0];
    const int w = model.net.input_shape[1];
    if (x.rank() == 3 && (x.height() != h || x.width() != w)) {
        return predict(model, bilinear_resize(x, h, w));
    }
    return predict(model, x);
}

namespace {

std::string tensor_name(std::size_t layer, bool is_kernel) {
    return "layer" + std::to_string(layer) + (is_kernel ? ".kernel" : ".bias");
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError("weight file: " + what + " at byte " + std::to_string(pos));
    }
    void need(std::size_t count, const std::string& what) const {
        if (pos + count > buf.size()) fail("truncated " + what);
    }
    std::uint8_t u8(const std::string& what) {
        need(1, what);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint16_t u16(const std::string& what) {
        need(2, what);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) {
            v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        }
        pos += 2;
        return v;
    }
    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }
    float f32(const std::string& what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(std::size_t count, const std::string& what) {
        need(count, what);
        std::string s = buf.substr(pos, count);
        pos += count;
        return s;
    }
};

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
    std::string out;
    out += "SSHD";
    out.push_back(static_cast<char>(0x01));
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(model.arch_id)));

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (std::size_t l = 0; l < model.net.weights.size(); ++l) {
        const LayerWeights& lw = model.net.weights[l];
        if (!lw.kernel.empty()) tensors.emplace_back(tensor_name(l, true), &lw.kernel);
        if (!lw.bias.empty()) tensors.emplace_back(tensor_name(l, false), &lw.bias);
    }
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        out.push_back(static_cast<char>(t->rank()));
        for (int ext : t->shape) put_u32(out, static_cast<std::uint32_t>(ext));
        for (float v : t->data) put_f32(out, v);
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_model: cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("save_model: write failed for " + path);
}

TrainedModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_model: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf};
    const std::string magic = r.bytes(4, "magic");
    if (magic != "SSHD") {
        throw FormatError("weight file: bad magic \"" + magic + "\" at byte 0");
    }
    const std::uint8_t version = r.u8("version");
    if (version != 0x01) {
        throw FormatError("weight file: unsupported version " + std::to_string(version) +
                          " at byte 4");
    }
    const std::uint8_t arch_byte = r.u8("architecture id");
    if (arch_byte > 1) {
        throw FormatError("weight file: unknown architecture id " + std::to_string(arch_byte) +
                          " at byte 5");
    }

    TrainedModel model;
    model.arch_id = static_cast<ArchId>(arch_byte);
    const ModelArchitecture arch = architecture_for(model.arch_id);
    model.net.input_shape = arch.input_shape;
    model.net.layers = arch.layers;
    model.net.weights = make_zero_weights(arch.input_shape, arch.layers);

    std::vector<std::pair<std::string, Tensor*>> expected;
    for (std::size_t l = 0; l < model.net.weights.size(); ++l) {
        LayerWeights& lw = model.net.weights[l];
        if (!lw.kernel.empty()) expected.emplace_back(tensor_name(l, true), &lw.kernel);
        if (!lw.bias.empty()) expected.emplace_back(tensor_name(l, false), &lw.bias);
    }

    const std::uint32_t count = r.u32("tensor count");
    if (count != expected.size()) {
        throw FormatError("weight file: tensor count " + std::to_string(count) + " != expected " +
                          std::to_string(expected.size()) + " for this architecture");
    }
    std::vector<bool> seen(expected.size(), false);
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t name_len = r.u16("tensor name length");
        const std::string name = r.bytes(name_len, "tensor name");
        const std::uint8_t rank = r.u8("rank of tensor " + name);
        std::vector<int> shape;
        std::size_t numel = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            const std::uint32_t ext = r.u32("extent of tensor " + name);
            if (ext == 0 || ext > (1u << 24)) {
                r.fail("extent " + std::to_string(ext) + " of tensor " + name + " out of range");
            }
            shape.push_back(static_cast<int>(ext));
            numel *= ext;
        }
        std::size_t slot = expected.size();
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (expected[i].first == name) slot = i;
        }
        if (slot == expected.size()) r.fail("unexpected tensor " + name);
        if (seen[slot]) r.fail("duplicate tensor " + name);
        seen[slot] = true;
        Tensor* dst = expected[slot].second;
        if (dst->shape != shape) {
            r.fail("tensor " + name + " has shape " + shape_to_string(shape) + ", expected " +
                   shape_to_string(dst->shape));
        }
        r.need(numel * 4, "data of tensor " + name);
        for (std::size_t e = 0; e < numel; ++e) {
            dst->data[e] = r.f32("data of tensor " + name);
        }
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (!seen[i]) throw FormatError("weight file: missing tensor " + expected[i].first);
    }
    if (r.pos != buf.size()) r.fail("trailing bytes");
    for (const auto& [name, t] : expected) {
        for (float v : t->data) {
            if (!std::isfinite(v)) {
                throw FormatError("weight file: non-finite value in tensor " + name);
            }
        }
    }
    return model;
}

}  // namespace signshield

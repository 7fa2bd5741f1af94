#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signshield/dataset.hpp"
#include "signshield/net.hpp"

namespace signshield {

inline constexpr int kClassCount = 18;

enum class ArchId : std::uint8_t { MODEL_A = 0, MODEL_B = 1 };

/// Named layer stack with its fixed input extent.
struct ModelArchitecture {
    ArchId id;
    std::vector<int> input_shape;  // {H, W, 3}
    std::vector<LayerSpec> layers;
};

/// Plain conv/pool stack at 64x64: conv16-relu-pool / conv32-relu-pool /
/// conv64-relu-pool / dense(128)-relu-dense(18).
ModelArchitecture model_a_architecture();

/// Residual stack at 56x56: stem conv16, two [conv-relu-conv + skip] blocks
/// with pooling between, dense(64)-relu-dense(18).
ModelArchitecture model_b_architecture();

ModelArchitecture architecture_for(ArchId id);

struct TrainedModel {
    ArchId arch_id = ArchId::MODEL_A;
    Network net;
    std::uint64_t train_seed = 0;
};

struct TrainConfig {
    int epochs = 40;
    int batch_size = 8;
    float learning_rate = 0.05f;
    float crop_fraction = 0.9f;  // train-time random crop/resize augmentation
    std::uint64_t seed = 0;
};

/// Per-epoch mean loss plus the final-3-epoch non-increase check.
struct TrainReport {
    std::vector<double> epoch_loss;
    bool converged = false;
};

/// Minibatch SGD from Glorot init; deterministic per cfg.seed
/// (separate child streams for init, shuffling, and augmentation).
/// Inputs are resized to the architecture extent before training.
TrainedModel train(const std::vector<LabeledImage>& dataset, const ModelArchitecture& arch,
                   const TrainConfig& cfg, TrainReport* report = nullptr);

struct Prediction {
    int label = 0;
    Tensor logits;
};

/// Argmax over the forward logits; ties break toward the lowest index.
Prediction predict(const TrainedModel& model, const Tensor& x);

/// Resizes x to the model input extent when needed, then predicts.
Prediction predict_resized(const TrainedModel& model, const Tensor& x);

/// Binary weight file: magic "SSHD", version 0x01, arch id byte, LE u32
/// tensor count, then per tensor: u16 name length + name, u8 rank, u32
/// extents, raw LE f32 data. Round trips are bit-exact.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace signshield

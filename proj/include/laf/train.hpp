#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laf/aggmodel.hpp"
#include "laf/dataset.hpp"

namespace laf {

enum class Optimizer { SgdMomentum, Adam };

std::string optimizer_name(Optimizer o);
Optimizer parse_optimizer(const std::string& name);

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    uint64_t seed = 0;
    Optimizer optimizer = Optimizer::Adam;
    int early_stop_patience = 5;  // 0 disables early stopping
    double bn_momentum = 0.1;
    double sgd_momentum = 0.9;

    void validate() const;
};

struct TrainMeta {
    TrainConfig config;
    double best_val_ap = 0.0;
    int best_epoch = 0;   // 0 means the pre-training snapshot
    int epochs_run = 0;
    std::string note;
};

struct Checkpoint {
    uint32_t format_version = 1;
    AggregationModel model;
    TrainMeta meta;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_ap = 0.0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochRecord> history;
};

// Weights are stored as 32-bit floats on disk; keeping the live model on the
// same grid makes save/load the identity.
void snap_model_f32(AggregationModel& model);

// Mini-batch BCE training with per-epoch validation AP; the returned
// checkpoint holds the parameters of the best validation epoch (the
// untouched start if no epoch improves on it).
TrainResult train_model(AggregationModel model, const AlignedDataset& train_set, const AlignedDataset& val_set,
                        const TrainConfig& config);

}  // namespace laf

#include "laf/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "laf/eval.hpp"
#include "laf/kernels.hpp"

namespace laf {

std::string optimizer_name(Optimizer o) {
    return o == Optimizer::Adam ? "adam" : "sgd_momentum";
}

Optimizer parse_optimizer(const std::string& name) {
    if (name == "adam") return Optimizer::Adam;
    if (name == "sgd_momentum") return Optimizer::SgdMomentum;
    throw InvalidArgument("unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
    if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
    if (batch_size < 1) throw InvalidArgument("batch_size must be positive");
    if (!(learning_rate > 0)) throw InvalidArgument("learning_rate must be positive");
    if (early_stop_patience < 0) throw InvalidArgument("early_stop_patience must be >= 0");
    if (!(bn_momentum > 0) || bn_momentum > 1) throw InvalidArgument("bn_momentum must be in (0, 1]");
    if (sgd_momentum < 0 || sgd_momentum >= 1) throw InvalidArgument("sgd_momentum must be in [0, 1)");
}

void snap_model_f32(AggregationModel& model) {
    for (const NamedParam& p : model_param_table(model))
        for (double& v : *p.data) v = static_cast<double>(static_cast<float>(v));
}

namespace {

void require_both_labels(const AlignedDataset& ds, const char* which) {
    ds.validate();
    if (ds.count_label(0) == 0 || ds.count_label(1) == 0)
        throw InvalidDataset(std::string(which) + " set must contain both labels");
}

double validation_ap(const AggregationModel& model, const AlignedDataset& val, int batch_size) {
    return dataset_average_precision(model, val, batch_size);
}

}  // namespace

TrainResult train_model(AggregationModel model, const AlignedDataset& train_set, const AlignedDataset& val_set,
                        const TrainConfig& config) {
    config.validate();
    require_both_labels(train_set, "train");
    require_both_labels(val_set, "validation");
    if (train_set.size != model.config.backbone.input_size || val_set.size != model.config.backbone.input_size)
        throw InvalidDataset("dataset image size does not match the model input size");

    snap_model_f32(model);

    TrainResult result;
    result.checkpoint.meta.config = config;
    result.checkpoint.model = model;
    result.checkpoint.meta.best_val_ap = validation_ap(model, val_set, config.batch_size);
    result.checkpoint.meta.best_epoch = 0;

    std::vector<NamedParam> table = model_param_table(model);
    std::vector<NamedParam> learnable;
    for (const NamedParam& p : table)
        if (p.learnable) learnable.push_back(p);

    std::vector<kernels::AdamState> adam(learnable.size());
    std::vector<std::vector<double>> velocity(learnable.size());
    for (size_t i = 0; i < learnable.size(); ++i) {
        adam[i].m.assign(learnable[i].data->size(), 0.0);
        adam[i].v.assign(learnable[i].data->size(), 0.0);
        velocity[i].assign(learnable[i].data->size(), 0.0);
    }
    long adam_step_count = 0;

    const int n = static_cast<int>(train_set.items.size());
    std::vector<int> indices(n);
    int stall = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(indices.begin(), indices.end(), 0);
        Rng shuffle_rng(derive_seed(config.seed, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(indices);

        double loss_sum = 0;
        for (int start = 0; start < n; start += config.batch_size) {
            int count = std::min(config.batch_size, n - start);
            std::vector<int> batch_idx(indices.begin() + start, indices.begin() + start + count);
            Tensor4 batch = assemble_batch(train_set, batch_idx);

            ModelCache cache;
            std::vector<double> logits = train_forward_model(model, batch, cache, config.bn_momentum, true);

            std::vector<double> d_logits(count);
            for (int i = 0; i < count; ++i) {
                int label = train_set.items[batch_idx[i]].label;
                loss_sum += bce_loss_from_logit(logits[i], label);
                d_logits[i] = (sigmoid(logits[i]) - label) / count;
            }

            ModelGrads grads = train_backward_model(model, cache, d_logits);
            std::vector<std::vector<double>*> gtab = grad_table(model, grads);
            if (config.optimizer == Optimizer::Adam) {
                ++adam_step_count;
                for (size_t i = 0; i < learnable.size(); ++i)
                    kernels::adam_step(*learnable[i].data, *gtab[i], adam[i], adam_step_count,
                                       config.learning_rate, 0.9, 0.999, 1e-8);
            } else {
                for (size_t i = 0; i < learnable.size(); ++i)
                    kernels::sgd_momentum_step(*learnable[i].data, *gtab[i], velocity[i], config.learning_rate,
                                               config.sgd_momentum);
            }
            snap_model_f32(model);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / n;
        rec.val_ap = validation_ap(model, val_set, config.batch_size);
        result.history.push_back(rec);
        result.checkpoint.meta.epochs_run = epoch;

        // Ties go to the later epoch: among equal-val snapshots the most
        // trained parameters are kept. Patience counts strict improvements.
        if (rec.val_ap >= result.checkpoint.meta.best_val_ap) {
            bool improved = rec.val_ap > result.checkpoint.meta.best_val_ap;
            result.checkpoint.meta.best_val_ap = rec.val_ap;
            result.checkpoint.meta.best_epoch = epoch;
            result.checkpoint.model = model;
            if (improved)
                stall = 0;
            else if (++stall >= config.early_stop_patience && config.early_stop_patience > 0)
                break;
        } else if (++stall >= config.early_stop_patience && config.early_stop_patience > 0) {
            break;
        }
    }

    result.checkpoint.meta.config = config;
    return result;
}

}  // namespace laf

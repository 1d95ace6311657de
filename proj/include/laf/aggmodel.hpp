#pragma once

#include <string>
#include <vector>

#include "laf/backbone.hpp"

namespace laf {

struct ModelConfig {
    BackboneConfig backbone = BackboneConfig::desk_default();
    int mlp_hidden1 = 128;
    int mlp_hidden2 = 32;
    int primitive_dim = 10;
    // Pool window per layer is the smallest window bringing the pooled
    // extent down to at most this many cells per side: ceil(S / extent).
    int pool_target_extent = 4;

    void validate() const;
};

struct ProjectorShape {
    int layer_index = 0;  // 1-based
    int in_channels = 0;
    int in_spatial = 0;
    int pool_window = 0;
    int pooled_extent = 0;
    int d_in = 0;
};

std::vector<ProjectorShape> projector_shapes(const ModelConfig& config);

// Per-layer primitive projector: AvgPool -> FC(h1) -> ReLU -> FC(h2) -> ReLU
// -> FC(primitive_dim).
struct PrimitiveProjector {
    int layer_index = 0;
    int pool_window = 0;
    int d_in = 0, h1 = 0, h2 = 0, out = 0;
    std::vector<double> w1, b1, w2, b2, w3, b3;
};

struct PrimitiveVector {
    int layer_index = 0;
    std::vector<double> values;
};

struct AggregationHead {
    std::vector<double> weight;       // primitive_dim * layer_count
    std::vector<double> bias{0.0};    // single scalar, kept as a vector for the parameter table
    double b() const { return bias[0]; }
};

struct AggregationModel {
    ModelConfig config;
    BackboneParams backbone;
    std::vector<PrimitiveProjector> projectors;
    AggregationHead head;

    int layer_count() const { return config.backbone.layer_count(); }
};

// Kaiming-uniform backbone and projectors; the head starts at exactly zero
// so every layer contributes nothing until training moves it.
AggregationModel init_model(const ModelConfig& config, uint64_t seed);

struct ModelParameterCount {
    long long backbone = 0;
    long long projectors = 0;
    long long head = 0;
    long long total = 0;
    std::vector<long long> per_projector;
};

ModelParameterCount model_parameter_count(const AggregationModel& model);

PrimitiveVector project_primitive(const FeatureMap& fm, const PrimitiveProjector& proj);

struct Aggregate {
    double logit = 0;
    double probability = 0;
};

// Logit is assembled as sum of per-layer contributions plus bias, the same
// summation the decomposition reports, so the identity is exact.
Aggregate aggregate(const std::vector<PrimitiveVector>& primitives, const AggregationHead& head);

struct LogitDecomposition {
    std::vector<double> contributions;  // c_i = <w_i, p_i>, one per layer
    double bias = 0;
    double total() const;
};

LogitDecomposition decompose_logit(const std::vector<PrimitiveVector>& primitives, const AggregationHead& head);

double sigmoid(double z);
// Probability-space BCE, probability clamped to [1e-7, 1 - 1e-7].
double bce_loss(double probability, int label);
// Numerically stable logit-space BCE.
double bce_loss_from_logit(double logit, int label);

struct ModelOutput {
    double logit = 0;
    double probability = 0;
    std::vector<PrimitiveVector> primitives;
};

ModelOutput model_forward(const AggregationModel& model, const Image& img);

// Forward over an externally produced tap list (see TapSource). The taps
// must match the model's layer count and projector input shapes.
ModelOutput model_forward_taps(const AggregationModel& model, const std::vector<FeatureMap>& taps);

// Eval-mode batched scoring; returns one logit per item.
std::vector<double> model_score_batch(const AggregationModel& model, const Tensor4& batch);

// Named parameter table in canonical order. Running statistics appear with
// learnable=false.
struct NamedParam {
    std::string name;
    std::vector<double>* data = nullptr;
    bool learnable = true;
};
std::vector<NamedParam> model_param_table(AggregationModel& model);

struct ProjectorGrads {
    std::vector<double> w1, b1, w2, b2, w3, b3;
};

struct ModelGrads {
    BackboneGrads backbone;
    std::vector<ProjectorGrads> projectors;
    std::vector<double> head_w;
    std::vector<double> head_b;
};

// Pointers to the gradient buffers in the same order as the learnable
// entries of model_param_table.
std::vector<std::vector<double>*> grad_table(const AggregationModel& model, ModelGrads& grads);

struct ModelCache {
    BackboneCache backbone;
    // Per layer: pooled rows and MLP activations for the whole batch.
    std::vector<std::vector<double>> x0;  // [N x d_in]
    std::vector<std::vector<double>> a1;  // [N x h1]
    std::vector<std::vector<double>> a2;  // [N x h2]
    std::vector<Tensor4> pooled_shape;    // pooled tensors (for unpooling dims)
    std::vector<double> concat;           // [N x dim*L]
    int batch = 0;
};

// Training-mode forward for a batch; returns per-item logits.
std::vector<double> train_forward_model(AggregationModel& model, const Tensor4& batch, ModelCache& cache,
                                        double bn_momentum, bool update_running);

// d_logits is dLoss/dlogit per item. Returns gradients for every learnable
// parameter.
ModelGrads train_backward_model(const AggregationModel& model, const ModelCache& cache,
                                const std::vector<double>& d_logits);

}  // namespace laf

#include "laf/aggmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace laf {

void ModelConfig::validate() const {
    backbone.validate();
    if (mlp_hidden1 <= 0 || mlp_hidden2 <= 0) throw InvalidArgument("mlp hidden sizes must be positive");
    if (primitive_dim <= 0) throw InvalidArgument("primitive_dim must be positive");
    if (pool_target_extent <= 0) throw InvalidArgument("pool_target_extent must be positive");
}

std::vector<ProjectorShape> projector_shapes(const ModelConfig& config) {
    config.validate();
    std::vector<ProjectorShape> out;
    auto shapes = layer_shapes(config.backbone);
    for (size_t l = 0; l < shapes.size(); ++l) {
        ProjectorShape ps;
        ps.layer_index = static_cast<int>(l) + 1;
        ps.in_channels = shapes[l].channels;
        ps.in_spatial = shapes[l].spatial;
        ps.pool_window = (shapes[l].spatial + config.pool_target_extent - 1) / config.pool_target_extent;
        ps.pooled_extent = (shapes[l].spatial + ps.pool_window - 1) / ps.pool_window;
        ps.d_in = ps.in_channels * ps.pooled_extent * ps.pooled_extent;
        out.push_back(ps);
    }
    return out;
}

namespace {

void init_fc(Rng& rng, std::vector<double>& w, std::vector<double>& b, int d_out, int d_in) {
    w.resize(static_cast<size_t>(d_out) * d_in);
    double bound = std::sqrt(6.0 / d_in);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    b.assign(d_out, 0.0);
}

}  // namespace

AggregationModel init_model(const ModelConfig& config, uint64_t seed) {
    config.validate();
    AggregationModel m;
    m.config = config;
    Rng rng(derive_seed(seed, 0));
    m.backbone = init_backbone(config.backbone, rng);
    for (const ProjectorShape& ps : projector_shapes(config)) {
        PrimitiveProjector proj;
        proj.layer_index = ps.layer_index;
        proj.pool_window = ps.pool_window;
        proj.d_in = ps.d_in;
        proj.h1 = config.mlp_hidden1;
        proj.h2 = config.mlp_hidden2;
        proj.out = config.primitive_dim;
        init_fc(rng, proj.w1, proj.b1, proj.h1, proj.d_in);
        init_fc(rng, proj.w2, proj.b2, proj.h2, proj.h1);
        init_fc(rng, proj.w3, proj.b3, proj.out, proj.h2);
        m.projectors.push_back(std::move(proj));
    }
    m.head.weight.assign(static_cast<size_t>(config.primitive_dim) * config.backbone.layer_count(), 0.0);
    m.head.bias.assign(1, 0.0);
    return m;
}

ModelParameterCount model_parameter_count(const AggregationModel& model) {
    ModelParameterCount pc;
    pc.backbone = backbone_parameter_count(model.backbone).total;
    for (const auto& p : model.projectors) {
        long long n = static_cast<long long>(p.w1.size()) + p.b1.size() + p.w2.size() + p.b2.size() +
                      p.w3.size() + p.b3.size();
        pc.per_projector.push_back(n);
        pc.projectors += n;
    }
    pc.head = static_cast<long long>(model.head.weight.size()) + 1;
    pc.total = pc.backbone + pc.projectors + pc.head;
    return pc;
}

PrimitiveVector project_primitive(const FeatureMap& fm, const PrimitiveProjector& proj) {
    if (fm.layer_index != proj.layer_index)
        throw InvalidArgument("feature map layer " + std::to_string(fm.layer_index) +
                              " does not match projector layer " + std::to_string(proj.layer_index));
    Tensor4 in(1, fm.values.channels, fm.values.height, fm.values.width);
    std::copy(fm.values.data.begin(), fm.values.data.end(), in.data.begin());
    Tensor4 pooled;
    kernels::avgpool_forward(in, proj.pool_window, pooled);
    if (static_cast<int>(pooled.size()) != proj.d_in)
        throw InvalidArgument("feature map shape does not match projector input size");
    std::vector<double> h1(proj.h1), h2(proj.h2);
    kernels::fc_forward(pooled.data.data(), 1, proj.d_in, proj.w1, proj.b1, proj.h1, h1.data());
    kernels::relu_forward(h1.data(), h1.size(), h1.data());
    kernels::fc_forward(h1.data(), 1, proj.h1, proj.w2, proj.b2, proj.h2, h2.data());
    kernels::relu_forward(h2.data(), h2.size(), h2.data());
    PrimitiveVector pv;
    pv.layer_index = proj.layer_index;
    pv.values.resize(proj.out);
    kernels::fc_forward(h2.data(), 1, proj.h2, proj.w3, proj.b3, proj.out, pv.values.data());
    return pv;
}

static void check_primitive_coverage(const std::vector<PrimitiveVector>& primitives, const AggregationHead& head) {
    if (primitives.empty()) throw InvalidArgument("no primitives to aggregate");
    size_t dim = primitives[0].values.size();
    for (size_t i = 0; i < primitives.size(); ++i) {
        if (primitives[i].layer_index != static_cast<int>(i) + 1)
            throw InvalidArgument("primitives must cover layers 1..L in order");
        if (primitives[i].values.size() != dim) throw InvalidArgument("primitive dimensions are inconsistent");
    }
    if (head.weight.size() != dim * primitives.size())
        throw InvalidArgument("head weight length does not match primitives");
}

LogitDecomposition decompose_logit(const std::vector<PrimitiveVector>& primitives, const AggregationHead& head) {
    check_primitive_coverage(primitives, head);
    LogitDecomposition d;
    d.bias = head.b();
    size_t dim = primitives[0].values.size();
    for (size_t i = 0; i < primitives.size(); ++i) {
        double c = 0;
        for (size_t k = 0; k < dim; ++k) c += head.weight[i * dim + k] * primitives[i].values[k];
        d.contributions.push_back(c);
    }
    return d;
}

double LogitDecomposition::total() const {
    double s = 0;
    for (double c : contributions) s += c;
    return s + bias;
}

Aggregate aggregate(const std::vector<PrimitiveVector>& primitives, const AggregationHead& head) {
    LogitDecomposition d = decompose_logit(primitives, head);
    Aggregate a;
    a.logit = d.total();
    a.probability = sigmoid(a.logit);
    return a;
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double bce_loss(double probability, int label) {
    if (label != 0 && label != 1) throw InvalidArgument("label must be 0 or 1");
    double p = std::clamp(probability, 1e-7, 1.0 - 1e-7);
    return -(label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

double bce_loss_from_logit(double logit, int label) {
    if (label != 0 && label != 1) throw InvalidArgument("label must be 0 or 1");
    return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

ModelOutput model_forward(const AggregationModel& model, const Image& img) {
    return model_forward_taps(model, forward_with_taps(model.backbone, img));
}

ModelOutput model_forward_taps(const AggregationModel& model, const std::vector<FeatureMap>& taps) {
    if (static_cast<int>(taps.size()) != model.layer_count())
        throw InvalidArgument("tap list has " + std::to_string(taps.size()) + " layers, model expects " +
                              std::to_string(model.layer_count()));
    ModelOutput out;
    for (size_t l = 0; l < taps.size(); ++l) out.primitives.push_back(project_primitive(taps[l], model.projectors[l]));
    Aggregate a = aggregate(out.primitives, model.head);
    out.logit = a.logit;
    out.probability = a.probability;
    return out;
}

std::vector<double> model_score_batch(const AggregationModel& model, const Tensor4& batch) {
    int N = batch.count;
    int L = model.layer_count();
    int dim = model.config.primitive_dim;
    auto taps = backbone_forward_eval(model.backbone, batch);
    std::vector<double> concat(static_cast<size_t>(N) * dim * L);
    for (int l = 0; l < L; ++l) {
        const PrimitiveProjector& proj = model.projectors[l];
        Tensor4 pooled;
        kernels::avgpool_forward(taps[l], proj.pool_window, pooled);
        std::vector<double> h1(static_cast<size_t>(N) * proj.h1), h2(static_cast<size_t>(N) * proj.h2);
        std::vector<double> p(static_cast<size_t>(N) * dim);
        kernels::fc_forward(pooled.data.data(), N, proj.d_in, proj.w1, proj.b1, proj.h1, h1.data());
        kernels::relu_forward(h1.data(), h1.size(), h1.data());
        kernels::fc_forward(h1.data(), N, proj.h1, proj.w2, proj.b2, proj.h2, h2.data());
        kernels::relu_forward(h2.data(), h2.size(), h2.data());
        kernels::fc_forward(h2.data(), N, proj.h2, proj.w3, proj.b3, dim, p.data());
        for (int n = 0; n < N; ++n)
            std::memcpy(&concat[(static_cast<size_t>(n) * L + l) * dim], &p[static_cast<size_t>(n) * dim],
                        sizeof(double) * dim);
    }
    std::vector<double> logits(N);
    for (int n = 0; n < N; ++n) {
        // Same per-layer summation order as the single-image path.
        double s = 0;
        for (int l = 0; l < L; ++l) {
            double c = 0;
            for (int k = 0; k < dim; ++k)
                c += model.head.weight[static_cast<size_t>(l) * dim + k] *
                     concat[(static_cast<size_t>(n) * L + l) * dim + k];
            s += c;
        }
        logits[n] = s + model.head.b();
    }
    return logits;
}

std::vector<NamedParam> model_param_table(AggregationModel& model) {
    std::vector<NamedParam> table;
    for (size_t l = 0; l < model.backbone.layers.size(); ++l) {
        std::string base = "backbone.layer" + std::to_string(l + 1) + ".";
        ConvLayerParams& lp = model.backbone.layers[l];
        table.push_back({base + "conv.weight", &lp.weight, true});
        if (!lp.bias.empty()) table.push_back({base + "conv.bias", &lp.bias, true});
        if (!lp.bn_gamma.empty()) {
            table.push_back({base + "bn.gamma", &lp.bn_gamma, true});
            table.push_back({base + "bn.beta", &lp.bn_beta, true});
            table.push_back({base + "bn.running_mean", &lp.bn_running_mean, false});
            table.push_back({base + "bn.running_var", &lp.bn_running_var, false});
        }
    }
    for (auto& proj : model.projectors) {
        std::string base = "projector.layer" + std::to_string(proj.layer_index) + ".";
        table.push_back({base + "fc1.weight", &proj.w1, true});
        table.push_back({base + "fc1.bias", &proj.b1, true});
        table.push_back({base + "fc2.weight", &proj.w2, true});
        table.push_back({base + "fc2.bias", &proj.b2, true});
        table.push_back({base + "fc3.weight", &proj.w3, true});
        table.push_back({base + "fc3.bias", &proj.b3, true});
    }
    table.push_back({"head.weight", &model.head.weight, true});
    table.push_back({"head.bias", &model.head.bias, true});
    return table;
}

std::vector<std::vector<double>*> grad_table(const AggregationModel& model, ModelGrads& grads) {
    std::vector<std::vector<double>*> table;
    for (size_t l = 0; l < model.backbone.layers.size(); ++l) {
        table.push_back(&grads.backbone.d_weight[l]);
        if (!model.backbone.layers[l].bias.empty()) table.push_back(&grads.backbone.d_bias[l]);
        if (!model.backbone.layers[l].bn_gamma.empty()) {
            table.push_back(&grads.backbone.d_gamma[l]);
            table.push_back(&grads.backbone.d_beta[l]);
        }
    }
    for (auto& pg : grads.projectors) {
        table.push_back(&pg.w1);
        table.push_back(&pg.b1);
        table.push_back(&pg.w2);
        table.push_back(&pg.b2);
        table.push_back(&pg.w3);
        table.push_back(&pg.b3);
    }
    table.push_back(&grads.head_w);
    table.push_back(&grads.head_b);
    return table;
}

std::vector<double> train_forward_model(AggregationModel& model, const Tensor4& batch, ModelCache& cache,
                                        double bn_momentum, bool update_running) {
    int N = batch.count;
    int L = model.layer_count();
    int dim = model.config.primitive_dim;
    cache.batch = N;
    backbone_forward_train(model.backbone, batch, cache.backbone, bn_momentum, update_running);
    cache.x0.assign(L, {});
    cache.a1.assign(L, {});
    cache.a2.assign(L, {});
    cache.pooled_shape.assign(L, Tensor4());
    cache.concat.assign(static_cast<size_t>(N) * dim * L, 0.0);
    for (int l = 0; l < L; ++l) {
        const PrimitiveProjector& proj = model.projectors[l];
        Tensor4 pooled;
        kernels::avgpool_forward(cache.backbone.taps[l], proj.pool_window, pooled);
        cache.x0[l] = pooled.data;
        cache.pooled_shape[l] = Tensor4(1, pooled.channels, pooled.height, pooled.width);
        cache.a1[l].resize(static_cast<size_t>(N) * proj.h1);
        cache.a2[l].resize(static_cast<size_t>(N) * proj.h2);
        std::vector<double> p(static_cast<size_t>(N) * dim);
        kernels::fc_forward(cache.x0[l].data(), N, proj.d_in, proj.w1, proj.b1, proj.h1, cache.a1[l].data());
        kernels::relu_forward(cache.a1[l].data(), cache.a1[l].size(), cache.a1[l].data());
        kernels::fc_forward(cache.a1[l].data(), N, proj.h1, proj.w2, proj.b2, proj.h2, cache.a2[l].data());
        kernels::relu_forward(cache.a2[l].data(), cache.a2[l].size(), cache.a2[l].data());
        kernels::fc_forward(cache.a2[l].data(), N, proj.h2, proj.w3, proj.b3, dim, p.data());
        for (int n = 0; n < N; ++n)
            std::memcpy(&cache.concat[(static_cast<size_t>(n) * L + l) * dim], &p[static_cast<size_t>(n) * dim],
                        sizeof(double) * dim);
    }
    std::vector<double> logits(N);
    for (int n = 0; n < N; ++n) {
        double s = 0;
        for (int l = 0; l < L; ++l) {
            double c = 0;
            for (int k = 0; k < dim; ++k)
                c += model.head.weight[static_cast<size_t>(l) * dim + k] *
                     cache.concat[(static_cast<size_t>(n) * L + l) * dim + k];
            s += c;
        }
        logits[n] = s + model.head.b();
    }
    return logits;
}

ModelGrads train_backward_model(const AggregationModel& model, const ModelCache& cache,
                                const std::vector<double>& d_logits) {
    int N = cache.batch;
    int L = model.layer_count();
    int dim = model.config.primitive_dim;
    if (static_cast<int>(d_logits.size()) != N) throw InvalidArgument("d_logits size mismatch");
    ModelGrads grads;
    grads.projectors.resize(L);

    // Head: FC with d_out = 1 over the concatenated primitives.
    std::vector<double> d_concat(cache.concat.size());
    kernels::fc_backward(cache.concat.data(), N, dim * L, model.head.weight, 1, d_logits.data(),
                         d_concat.data(), grads.head_w, grads.head_b);

    std::vector<Tensor4> d_taps(L);
    for (int l = 0; l < L; ++l) {
        const PrimitiveProjector& proj = model.projectors[l];
        ProjectorGrads& pg = grads.projectors[l];
        std::vector<double> d_p(static_cast<size_t>(N) * dim);
        for (int n = 0; n < N; ++n)
            std::memcpy(&d_p[static_cast<size_t>(n) * dim], &d_concat[(static_cast<size_t>(n) * L + l) * dim],
                        sizeof(double) * dim);
        std::vector<double> d_a2(static_cast<size_t>(N) * proj.h2);
        kernels::fc_backward(cache.a2[l].data(), N, proj.h2, proj.w3, dim, d_p.data(), d_a2.data(), pg.w3, pg.b3);
        kernels::relu_backward(cache.a2[l].data(), d_a2.data(), d_a2.size(), d_a2.data());
        std::vector<double> d_a1(static_cast<size_t>(N) * proj.h1);
        kernels::fc_backward(cache.a1[l].data(), N, proj.h1, proj.w2, proj.h2, d_a2.data(), d_a1.data(), pg.w2,
                             pg.b2);
        kernels::relu_backward(cache.a1[l].data(), d_a1.data(), d_a1.size(), d_a1.data());
        std::vector<double> d_x0(static_cast<size_t>(N) * proj.d_in);
        kernels::fc_backward(cache.x0[l].data(), N, proj.d_in, proj.w1, proj.h1, d_a1.data(), d_x0.data(), pg.w1,
                             pg.b1);
        // Unpool back to the tap shape.
        const Tensor4& ps = cache.pooled_shape[l];
        Tensor4 d_pooled(N, ps.channels, ps.height, ps.width);
        d_pooled.data = std::move(d_x0);
        const Tensor4& tap = cache.backbone.taps[l];
        kernels::avgpool_backward(tap.height, tap.width, proj.pool_window, d_pooled, d_taps[l]);
    }
    backbone_backward(model.backbone, cache.backbone, d_taps, grads.backbone);
    return grads;
}

}  // namespace laf

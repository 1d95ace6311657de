#pragma once

#include <vector>

#include "laf/image.hpp"
#include "laf/kernels.hpp"
#include "laf/tensor.hpp"

namespace laf {

struct ConvLayerSpec {
    int out_channels = 0;
    int stride = 1;
    int kernel = 3;
    bool use_batchnorm = true;
    bool use_bias = false;
};

struct BackboneConfig {
    int in_channels = 3;
    int input_size = 256;
    std::vector<ConvLayerSpec> layers;

    // 8 conv layers, channels doubling every other layer, stride 2 on the
    // odd layers: spatial path 256 -> 128,128,64,64,32,32,16,16.
    static BackboneConfig desk_default();
    int layer_count() const { return static_cast<int>(layers.size()); }
    void validate() const;
};

struct LayerShape {
    int channels = 0;
    int spatial = 0;  // square feature maps
};

// Output shape of each tapped layer, by stride arithmetic.
std::vector<LayerShape> layer_shapes(const BackboneConfig& config);

struct ConvLayerParams {
    std::vector<double> weight;  // out*in*k*k
    std::vector<double> bias;    // empty unless use_bias
    std::vector<double> bn_gamma, bn_beta;
    std::vector<double> bn_running_mean, bn_running_var;
};

struct BackboneParams {
    BackboneConfig config;
    std::vector<ConvLayerParams> layers;
};

// Kaiming-uniform conv weights, zero biases, identity batch norm.
BackboneParams init_backbone(const BackboneConfig& config, Rng& rng);

struct ParameterCount {
    long long total = 0;
    std::vector<long long> per_layer;
};

// Learnable parameters only (running statistics are state, not parameters).
ParameterCount backbone_parameter_count(const BackboneParams& params);

// Eval-mode forward for one image; returns the tap after every layer.
std::vector<FeatureMap> forward_with_taps(const BackboneParams& params, const Image& img);

// Ordered tap list protocol: anything producing per-layer feature maps in
// layer order can stand in for the built-in backbone, so a pretrained
// network can be adapted without touching the aggregation side.
struct TapSource {
    virtual ~TapSource() = default;
    virtual int tap_count() const = 0;
    virtual std::vector<FeatureMap> taps(const Image& img) const = 0;
};

// The built-in backbone exposed through the protocol.
class BackboneTapSource : public TapSource {
public:
    explicit BackboneTapSource(const BackboneParams& params) : params_(params) {}
    int tap_count() const override { return params_.config.layer_count(); }
    std::vector<FeatureMap> taps(const Image& img) const override { return forward_with_taps(params_, img); }

private:
    const BackboneParams& params_;
};

// Eval-mode single layer application, the same computation the full forward
// runs for that layer. layer_index is 1-based.
Tensor3 apply_layer(const BackboneParams& params, int layer_index, const Tensor3& input);

// Eval-mode batched forward; taps[l] holds layer l+1 output for the batch.
std::vector<Tensor4> backbone_forward_eval(const BackboneParams& params, const Tensor4& input);

// Training-mode forward state needed by the backward pass.
struct BackboneCache {
    Tensor4 input;
    std::vector<Tensor4> taps;     // relu outputs per layer
    std::vector<Tensor4> xhat;     // batch-norm normalized pre-scale
    std::vector<std::vector<double>> inv_std;
};

// Batch-norm uses batch statistics and, when update_running is set, blends
// them into the running estimates with the given momentum.
void backbone_forward_train(BackboneParams& params, const Tensor4& input, BackboneCache& cache,
                            double bn_momentum, bool update_running);

struct BackboneGrads {
    std::vector<std::vector<double>> d_weight, d_bias, d_gamma, d_beta;
};

// d_taps[l] is the gradient arriving at tap l from outside the backbone; the
// chain through deeper layers is added internally.
void backbone_backward(const BackboneParams& params, const BackboneCache& cache,
                       const std::vector<Tensor4>& d_taps, BackboneGrads& grads, Tensor4* d_input = nullptr);

}  // namespace laf

#include "laf/backbone.hpp"

#include <cmath>

namespace laf {

BackboneConfig BackboneConfig::desk_default() {
    BackboneConfig c;
    c.in_channels = 3;
    c.input_size = 256;
    const int channels[8] = {16, 16, 32, 32, 64, 64, 128, 128};
    for (int i = 0; i < 8; ++i) c.layers.push_back(ConvLayerSpec{channels[i], i % 2 == 0 ? 2 : 1});
    return c;
}

void BackboneConfig::validate() const {
    if (layers.empty()) throw InvalidArgument("backbone needs at least one layer");
    if (in_channels <= 0 || input_size <= 0) throw InvalidArgument("backbone input dims must be positive");
    for (const auto& l : layers) {
        if (l.out_channels <= 0) throw InvalidArgument("layer out_channels must be positive");
        if (l.stride < 1) throw InvalidArgument("layer stride must be at least 1");
        if (l.kernel < 1 || l.kernel % 2 == 0) throw InvalidArgument("kernel must be odd and positive");
    }
    for (const auto& shape : layer_shapes(*this))
        if (shape.spatial < 1) throw InvalidArgument("layer spatial extent collapsed to zero");
}

std::vector<LayerShape> layer_shapes(const BackboneConfig& config) {
    std::vector<LayerShape> shapes;
    int s = config.input_size;
    for (const auto& l : config.layers) {
        s = kernels::conv_out_extent(s, l.kernel, l.stride, l.kernel / 2);
        shapes.push_back({l.out_channels, s});
    }
    return shapes;
}

BackboneParams init_backbone(const BackboneConfig& config, Rng& rng) {
    config.validate();
    BackboneParams p;
    p.config = config;
    int cin = config.in_channels;
    for (const auto& spec : config.layers) {
        ConvLayerParams lp;
        size_t wn = static_cast<size_t>(spec.out_channels) * cin * spec.kernel * spec.kernel;
        lp.weight.resize(wn);
        double bound = std::sqrt(6.0 / (static_cast<double>(cin) * spec.kernel * spec.kernel));
        for (auto& w : lp.weight) w = rng.uniform(-bound, bound);
        if (spec.use_bias) lp.bias.assign(spec.out_channels, 0.0);
        if (spec.use_batchnorm) {
            lp.bn_gamma.assign(spec.out_channels, 1.0);
            lp.bn_beta.assign(spec.out_channels, 0.0);
            lp.bn_running_mean.assign(spec.out_channels, 0.0);
            lp.bn_running_var.assign(spec.out_channels, 1.0);
        }
        p.layers.push_back(std::move(lp));
        cin = spec.out_channels;
    }
    return p;
}

ParameterCount backbone_parameter_count(const BackboneParams& params) {
    ParameterCount pc;
    for (const auto& lp : params.layers) {
        long long n = static_cast<long long>(lp.weight.size()) + lp.bias.size() + lp.bn_gamma.size() +
                      lp.bn_beta.size();
        pc.per_layer.push_back(n);
        pc.total += n;
    }
    return pc;
}

namespace {

kernels::ConvShape conv_shape(const BackboneConfig& config, int layer) {
    const ConvLayerSpec& spec = config.layers[layer];
    int cin = layer == 0 ? config.in_channels : config.layers[layer - 1].out_channels;
    return kernels::ConvShape{spec.out_channels, cin, spec.kernel, spec.stride, spec.kernel / 2};
}

// conv -> bn(eval) -> relu for a batch.
Tensor4 layer_forward_eval(const BackboneParams& params, int layer, const Tensor4& in) {
    const ConvLayerSpec& spec = params.config.layers[layer];
    const ConvLayerParams& lp = params.layers[layer];
    Tensor4 z;
    kernels::conv2d_forward(in, lp.weight, spec.use_bias ? &lp.bias : nullptr, conv_shape(params.config, layer), z);
    if (spec.use_batchnorm) {
        Tensor4 bn;
        kernels::bn_forward_eval(z, lp.bn_gamma, lp.bn_beta, lp.bn_running_mean, lp.bn_running_var, 1e-5, bn);
        z = std::move(bn);
    }
    kernels::relu_forward(z.data.data(), z.size(), z.data.data());
    return z;
}

Tensor4 image_to_batch(const Image& img) {
    Tensor4 t(1, img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) t.at(0, c, y, x) = img.at(y, x, c);
    return t;
}

}  // namespace

std::vector<FeatureMap> forward_with_taps(const BackboneParams& params, const Image& img) {
    if (img.height != params.config.input_size || img.width != params.config.input_size ||
        img.channels != params.config.in_channels)
        throw InvalidArgument("backbone input must be " + std::to_string(params.config.input_size) + "x" +
                              std::to_string(params.config.input_size) + "x" +
                              std::to_string(params.config.in_channels));
    Tensor4 x = image_to_batch(img);
    std::vector<FeatureMap> taps;
    for (int l = 0; l < params.config.layer_count(); ++l) {
        x = layer_forward_eval(params, l, x);
        taps.push_back(FeatureMap{l + 1, x.slice(0)});
    }
    return taps;
}

Tensor3 apply_layer(const BackboneParams& params, int layer_index, const Tensor3& input) {
    if (layer_index < 1 || layer_index > params.config.layer_count())
        throw InvalidArgument("layer_index out of range: " + std::to_string(layer_index));
    Tensor4 x(1, input.channels, input.height, input.width);
    std::copy(input.data.begin(), input.data.end(), x.data.begin());
    Tensor4 y = layer_forward_eval(params, layer_index - 1, x);
    return y.slice(0);
}

std::vector<Tensor4> backbone_forward_eval(const BackboneParams& params, const Tensor4& input) {
    if (input.channels != params.config.in_channels || input.height != params.config.input_size ||
        input.width != params.config.input_size)
        throw InvalidArgument("backbone batch input has the wrong shape");
    std::vector<Tensor4> taps;
    Tensor4 x = input;
    for (int l = 0; l < params.config.layer_count(); ++l) {
        x = layer_forward_eval(params, l, x);
        taps.push_back(x);
    }
    return taps;
}

void backbone_forward_train(BackboneParams& params, const Tensor4& input, BackboneCache& cache,
                            double bn_momentum, bool update_running) {
    int L = params.config.layer_count();
    cache.input = input;
    cache.taps.assign(L, Tensor4());
    cache.xhat.assign(L, Tensor4());
    cache.inv_std.assign(L, {});
    const Tensor4* x = &cache.input;
    for (int l = 0; l < L; ++l) {
        const ConvLayerSpec& spec = params.config.layers[l];
        ConvLayerParams& lp = params.layers[l];
        Tensor4 z;
        kernels::conv2d_forward(*x, lp.weight, spec.use_bias ? &lp.bias : nullptr, conv_shape(params.config, l), z);
        if (spec.use_batchnorm) {
            Tensor4 bn;
            std::vector<double> mean, var;
            kernels::bn_forward_train(z, lp.bn_gamma, lp.bn_beta, 1e-5, bn, cache.xhat[l], mean, var);
            cache.inv_std[l].resize(mean.size());
            for (size_t c = 0; c < mean.size(); ++c) cache.inv_std[l][c] = 1.0 / std::sqrt(var[c] + 1e-5);
            if (update_running)
                for (size_t c = 0; c < mean.size(); ++c) {
                    lp.bn_running_mean[c] = (1.0 - bn_momentum) * lp.bn_running_mean[c] + bn_momentum * mean[c];
                    lp.bn_running_var[c] = (1.0 - bn_momentum) * lp.bn_running_var[c] + bn_momentum * var[c];
                }
            z = std::move(bn);
        }
        kernels::relu_forward(z.data.data(), z.size(), z.data.data());
        cache.taps[l] = std::move(z);
        x = &cache.taps[l];
    }
}

void backbone_backward(const BackboneParams& params, const BackboneCache& cache,
                       const std::vector<Tensor4>& d_taps, BackboneGrads& grads, Tensor4* d_input) {
    int L = params.config.layer_count();
    if (static_cast<int>(d_taps.size()) != L) throw InvalidArgument("d_taps must cover every layer");
    grads.d_weight.assign(L, {});
    grads.d_bias.assign(L, {});
    grads.d_gamma.assign(L, {});
    grads.d_beta.assign(L, {});

    Tensor4 carried;  // gradient flowing into tap l from layer l+1
    for (int l = L - 1; l >= 0; --l) {
        const ConvLayerSpec& spec = params.config.layers[l];
        const ConvLayerParams& lp = params.layers[l];
        Tensor4 delta = d_taps[l];
        if (l < L - 1)
            for (size_t i = 0; i < delta.size(); ++i) delta.data[i] += carried.data[i];
        // relu
        kernels::relu_backward(cache.taps[l].data.data(), delta.data.data(), delta.size(), delta.data.data());
        // batch norm
        if (spec.use_batchnorm) {
            Tensor4 d_z;
            kernels::bn_backward(cache.xhat[l], lp.bn_gamma, cache.inv_std[l], delta, d_z, grads.d_gamma[l],
                                 grads.d_beta[l]);
            delta = std::move(d_z);
        }
        // conv
        const Tensor4& layer_in = l == 0 ? cache.input : cache.taps[l - 1];
        Tensor4 d_in;
        kernels::conv2d_backward(layer_in, lp.weight, conv_shape(params.config, l), delta, d_in,
                                 grads.d_weight[l], spec.use_bias ? &grads.d_bias[l] : nullptr);
        carried = std::move(d_in);
    }
    if (d_input) *d_input = std::move(carried);
}

}  // namespace laf

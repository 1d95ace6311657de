#pragma once

#include <vector>

#include "laf/common.hpp"

namespace laf {

// CHW feature tensor.
struct Tensor3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int c, int h, int w) : channels(c), height(h), width(w) {
        if (c <= 0 || h <= 0 || w <= 0) throw InvalidArgument("tensor dims must be positive");
        data.assign(static_cast<size_t>(c) * h * w, 0.0);
    }
    double& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    size_t size() const { return data.size(); }
};

// NCHW batch tensor.
struct Tensor4 {
    int count = 0;
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor4() = default;
    Tensor4(int n, int c, int h, int w) : count(n), channels(c), height(h), width(w) {
        if (n <= 0 || c <= 0 || h <= 0 || w <= 0) throw InvalidArgument("tensor dims must be positive");
        data.assign(static_cast<size_t>(n) * c * h * w, 0.0);
    }
    size_t item_size() const { return static_cast<size_t>(channels) * height * width; }
    double* item(int n) { return data.data() + n * item_size(); }
    const double* item(int n) const { return data.data() + n * item_size(); }
    double& at(int n, int c, int y, int x) {
        return data[((static_cast<size_t>(n) * channels + c) * height + y) * width + x];
    }
    double at(int n, int c, int y, int x) const {
        return data[((static_cast<size_t>(n) * channels + c) * height + y) * width + x];
    }
    size_t size() const { return data.size(); }

    Tensor3 slice(int n) const {
        Tensor3 t(channels, height, width);
        const double* p = item(n);
        std::copy(p, p + item_size(), t.data.begin());
        return t;
    }
};

// Output of one tapped backbone layer for a single image.
struct FeatureMap {
    int layer_index = 0;  // 1-based
    Tensor3 values;
};

}  // namespace laf

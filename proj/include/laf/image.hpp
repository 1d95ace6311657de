#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laf/common.hpp"

namespace laf {

// Dense HWC image, values nominally in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c) : height(h), width(w), channels(c) {
        if (h <= 0 || w <= 0 || c <= 0) throw InvalidArgument("image dims must be positive");
        data.assign(static_cast<size_t>(h) * w * c, 0.0);
    }

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    size_t size() const { return data.size(); }
};

// Bilinear sample with zero fill outside the source extent.
double bilinear_sample(const Image& img, double x, double y, int c);

Image resize_bilinear(const Image& img, int out_h, int out_w);

// Row-major 2x3 affine: dst(x,y) maps source coordinates per
//   x_src = a*x + b*y + tx,  y_src = c*x + d*y + ty  (inverse mapping form
// is produced by Affine::inverse()).
struct Affine {
    double a = 1, b = 0, tx = 0;
    double c = 0, d = 1, ty = 0;

    void apply(double x, double y, double& ox, double& oy) const {
        ox = a * x + b * y + tx;
        oy = c * x + d * y + ty;
    }
    Affine inverse() const;
    // this ∘ other: applies 'other' first.
    Affine compose(const Affine& other) const;
    // Scale factor of a similarity transform (sqrt of |determinant|).
    double scale() const;
};

// Warp with the FORWARD transform 'fwd' (source -> destination); sampling
// uses its inverse. Out-of-source pixels are zero filled.
Image warp_affine(const Image& img, const Affine& fwd, int out_h, int out_w);

// Separable box blur, window (2*radius+1), edge-clamped.
Image box_blur(const Image& img, int radius);

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v);
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

uint8_t quantize8(double v);

// PNG IO. Write emits 8-bit gray (1 channel) or RGB (3 channels) with fixed
// encoder settings so identical pixels give identical bytes. Read returns
// values in [0, 1].
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace laf

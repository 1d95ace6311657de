#include "laf/image.hpp"

#include <algorithm>
#include <cmath>

namespace laf {

double bilinear_sample(const Image& img, double x, double y, int c) {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0;
    double fy = y - y0;
    auto px = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) return 0.0;
        return img.at(yy, xx, c);
    };
    double top = px(y0, x0) * (1 - fx) + px(y0, x0 + 1) * fx;
    double bot = px(y0 + 1, x0) * (1 - fx) + px(y0 + 1, x0 + 1) * fx;
    return top * (1 - fy) + bot * fy;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    Image out(out_h, out_w, img.channels);
    double sy = static_cast<double>(img.height) / out_h;
    double sx = static_cast<double>(img.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double src_y = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < out_w; ++x) {
            double src_x = (x + 0.5) * sx - 0.5;
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = bilinear_sample(img, src_x, src_y, c);
        }
    }
    return out;
}

Affine Affine::inverse() const {
    double det = a * d - b * c;
    if (std::abs(det) < 1e-12) throw DegenerateGeometry("affine transform is singular");
    Affine inv;
    inv.a = d / det;
    inv.b = -b / det;
    inv.c = -c / det;
    inv.d = a / det;
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
}

Affine Affine::compose(const Affine& o) const {
    Affine r;
    r.a = a * o.a + b * o.c;
    r.b = a * o.b + b * o.d;
    r.tx = a * o.tx + b * o.ty + tx;
    r.c = c * o.a + d * o.c;
    r.d = c * o.b + d * o.d;
    r.ty = c * o.tx + d * o.ty + ty;
    return r;
}

double Affine::scale() const { return std::sqrt(std::abs(a * d - b * c)); }

Image warp_affine(const Image& img, const Affine& fwd, int out_h, int out_w) {
    Affine inv = fwd.inverse();
    Image out(out_h, out_w, img.channels);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            double sx, sy;
            inv.apply(x, y, sx, sy);
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = bilinear_sample(img, sx, sy, c);
        }
    }
    return out;
}

Image box_blur(const Image& img, int radius) {
    if (radius <= 0) return img;
    Image tmp(img.height, img.width, img.channels);
    Image out(img.height, img.width, img.channels);
    int w = 2 * radius + 1;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double s = 0;
                for (int k = -radius; k <= radius; ++k) {
                    int xx = std::clamp(x + k, 0, img.width - 1);
                    s += img.at(y, xx, c);
                }
                tmp.at(y, x, c) = s / w;
            }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double s = 0;
                for (int k = -radius; k <= radius; ++k) {
                    int yy = std::clamp(y + k, 0, img.height - 1);
                    s += tmp.at(yy, x, c);
                }
                out.at(y, x, c) = s / w;
            }
    return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    double mx = std::max({r, g, b});
    double mn = std::min({r, g, b});
    double d = mx - mn;
    v = mx;
    s = mx > 0 ? d / mx : 0.0;
    if (d <= 0) {
        h = 0;
        return;
    }
    if (mx == r)
        h = std::fmod((g - b) / d, 6.0);
    else if (mx == g)
        h = (b - r) / d + 2.0;
    else
        h = (r - g) / d + 4.0;
    h /= 6.0;
    if (h < 0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    h = h - std::floor(h);
    double c = v * s;
    double hp = h * 6.0;
    double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    if (hp < 1) {
        r1 = c; g1 = x;
    } else if (hp < 2) {
        r1 = x; g1 = c;
    } else if (hp < 3) {
        g1 = c; b1 = x;
    } else if (hp < 4) {
        g1 = x; b1 = c;
    } else if (hp < 5) {
        r1 = x; b1 = c;
    } else {
        r1 = c; b1 = x;
    }
    double m = v - c;
    r = r1 + m;
    g = g1 + m;
    b = b1 + m;
}

uint8_t quantize8(double v) {
    double c = std::clamp(v, 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

}  // namespace laf

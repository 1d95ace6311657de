#include "laf/ref_kernels.hpp"

#include <cmath>

namespace laf::ref {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    auto A = [&](int i, int j) { return trans_a ? a[static_cast<size_t>(j) * lda + i] : a[static_cast<size_t>(i) * lda + j]; };
    auto B = [&](int i, int j) { return trans_b ? b[static_cast<size_t>(j) * ldb + i] : b[static_cast<size_t>(i) * ldb + j]; };
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int p = 0; p < k; ++p) s += A(i, p) * B(p, j);
            double& out = c[static_cast<size_t>(i) * ldc + j];
            out = alpha * s + (beta == 0.0 ? 0.0 : beta * out);
        }
}

void conv2d_forward(const Tensor4& in, const std::vector<double>& weight, const std::vector<double>* bias,
                    const ConvShape& sh, Tensor4& out) {
    int oh = conv_out_extent(in.height, sh.kernel, sh.stride, sh.pad);
    int ow = conv_out_extent(in.width, sh.kernel, sh.stride, sh.pad);
    out = Tensor4(in.count, sh.out_channels, oh, ow);
    for (int n = 0; n < in.count; ++n)
        for (int co = 0; co < sh.out_channels; ++co)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double s = bias ? (*bias)[co] : 0.0;
                    for (int ci = 0; ci < sh.in_channels; ++ci)
                        for (int ky = 0; ky < sh.kernel; ++ky)
                            for (int kx = 0; kx < sh.kernel; ++kx) {
                                int iy = oy * sh.stride + ky - sh.pad;
                                int ix = ox * sh.stride + kx - sh.pad;
                                if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width) continue;
                                double wv = weight[((static_cast<size_t>(co) * sh.in_channels + ci) * sh.kernel + ky) * sh.kernel + kx];
                                s += wv * in.at(n, ci, iy, ix);
                            }
                    out.at(n, co, oy, ox) = s;
                }
}

void conv2d_backward(const Tensor4& in, const std::vector<double>& weight, const ConvShape& sh,
                     const Tensor4& d_out, Tensor4& d_in, std::vector<double>& d_weight,
                     std::vector<double>* d_bias) {
    d_in = Tensor4(in.count, in.channels, in.height, in.width);
    d_weight.assign(weight.size(), 0.0);
    if (d_bias) d_bias->assign(static_cast<size_t>(sh.out_channels), 0.0);
    for (int n = 0; n < in.count; ++n)
        for (int co = 0; co < sh.out_channels; ++co)
            for (int oy = 0; oy < d_out.height; ++oy)
                for (int ox = 0; ox < d_out.width; ++ox) {
                    double g = d_out.at(n, co, oy, ox);
                    if (d_bias) (*d_bias)[co] += g;
                    for (int ci = 0; ci < sh.in_channels; ++ci)
                        for (int ky = 0; ky < sh.kernel; ++ky)
                            for (int kx = 0; kx < sh.kernel; ++kx) {
                                int iy = oy * sh.stride + ky - sh.pad;
                                int ix = ox * sh.stride + kx - sh.pad;
                                if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width) continue;
                                size_t wi = ((static_cast<size_t>(co) * sh.in_channels + ci) * sh.kernel + ky) * sh.kernel + kx;
                                d_weight[wi] += g * in.at(n, ci, iy, ix);
                                d_in.at(n, ci, iy, ix) += g * weight[wi];
                            }
                }
}

void avgpool_forward(const Tensor4& in, int window, Tensor4& out) {
    if (window <= 0) throw InvalidArgument("pool window must be positive");
    int oh = (in.height + window - 1) / window;
    int ow = (in.width + window - 1) / window;
    out = Tensor4(in.count, in.channels, oh, ow);
    for (int n = 0; n < in.count; ++n)
        for (int c = 0; c < in.channels; ++c)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    int y0 = oy * window, x0 = ox * window;
                    int y1 = std::min(y0 + window, in.height);
                    int x1 = std::min(x0 + window, in.width);
                    double s = 0;
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) s += in.at(n, c, y, x);
                    out.at(n, c, oy, ox) = s / ((y1 - y0) * (x1 - x0));
                }
}

void avgpool_backward(int in_h, int in_w, int window, const Tensor4& d_out, Tensor4& d_in) {
    d_in = Tensor4(d_out.count, d_out.channels, in_h, in_w);
    for (int n = 0; n < d_out.count; ++n)
        for (int c = 0; c < d_out.channels; ++c)
            for (int oy = 0; oy < d_out.height; ++oy)
                for (int ox = 0; ox < d_out.width; ++ox) {
                    int y0 = oy * window, x0 = ox * window;
                    int y1 = std::min(y0 + window, in_h);
                    int x1 = std::min(x0 + window, in_w);
                    double g = d_out.at(n, c, oy, ox) / ((y1 - y0) * (x1 - x0));
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) d_in.at(n, c, y, x) += g;
                }
}

void fc_forward(const double* x, int n, int d_in, const std::vector<double>& w, const std::vector<double>& b,
                int d_out, double* y) {
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < d_out; ++o) {
            double s = b.empty() ? 0.0 : b[o];
            for (int j = 0; j < d_in; ++j) s += x[static_cast<size_t>(i) * d_in + j] * w[static_cast<size_t>(o) * d_in + j];
            y[static_cast<size_t>(i) * d_out + o] = s;
        }
}

void fc_backward(const double* x, int n, int d_in, const std::vector<double>& w, int d_out, const double* d_y,
                 double* d_x, std::vector<double>& d_w, std::vector<double>& d_b) {
    d_w.assign(static_cast<size_t>(d_out) * d_in, 0.0);
    d_b.assign(static_cast<size_t>(d_out), 0.0);
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < d_out; ++o) {
            double g = d_y[static_cast<size_t>(i) * d_out + o];
            d_b[o] += g;
            for (int j = 0; j < d_in; ++j) d_w[static_cast<size_t>(o) * d_in + j] += g * x[static_cast<size_t>(i) * d_in + j];
        }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d_in; ++j) {
            double s = 0;
            for (int o = 0; o < d_out; ++o) s += d_y[static_cast<size_t>(i) * d_out + o] * w[static_cast<size_t>(o) * d_in + j];
            d_x[static_cast<size_t>(i) * d_in + j] = s;
        }
}

void relu_forward(const double* x, size_t n, double* y) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
}

void relu_backward(const double* y, const double* d_y, size_t n, double* d_x) {
    for (size_t i = 0; i < n; ++i) d_x[i] = y[i] > 0 ? d_y[i] : 0.0;
}

void bn_forward_train(const Tensor4& in, const std::vector<double>& gamma, const std::vector<double>& beta,
                      double eps, Tensor4& out, Tensor4& xhat, std::vector<double>& mean,
                      std::vector<double>& var) {
    int C = in.channels;
    size_t m = static_cast<size_t>(in.count) * in.height * in.width;
    out = Tensor4(in.count, C, in.height, in.width);
    xhat = Tensor4(in.count, C, in.height, in.width);
    mean.assign(C, 0.0);
    var.assign(C, 0.0);
    for (int c = 0; c < C; ++c) {
        double s = 0;
        for (int n = 0; n < in.count; ++n)
            for (int y = 0; y < in.height; ++y)
                for (int x = 0; x < in.width; ++x) s += in.at(n, c, y, x);
        mean[c] = s / m;
        double v = 0;
        for (int n = 0; n < in.count; ++n)
            for (int y = 0; y < in.height; ++y)
                for (int x = 0; x < in.width; ++x) {
                    double d = in.at(n, c, y, x) - mean[c];
                    v += d * d;
                }
        var[c] = v / m;
        double inv = 1.0 / std::sqrt(var[c] + eps);
        for (int n = 0; n < in.count; ++n)
            for (int y = 0; y < in.height; ++y)
                for (int x = 0; x < in.width; ++x) {
                    double xh = (in.at(n, c, y, x) - mean[c]) * inv;
                    xhat.at(n, c, y, x) = xh;
                    out.at(n, c, y, x) = gamma[c] * xh + beta[c];
                }
    }
}

void bn_backward(const Tensor4& xhat, const std::vector<double>& gamma, const std::vector<double>& inv_std,
                 const Tensor4& d_out, Tensor4& d_in, std::vector<double>& d_gamma, std::vector<double>& d_beta) {
    int C = xhat.channels;
    double m = static_cast<double>(xhat.count) * xhat.height * xhat.width;
    d_in = Tensor4(xhat.count, C, xhat.height, xhat.width);
    d_gamma.assign(C, 0.0);
    d_beta.assign(C, 0.0);
    for (int c = 0; c < C; ++c) {
        double sd = 0, sdx = 0;
        for (int n = 0; n < xhat.count; ++n)
            for (int y = 0; y < xhat.height; ++y)
                for (int x = 0; x < xhat.width; ++x) {
                    double g = d_out.at(n, c, y, x);
                    sd += g;
                    sdx += g * xhat.at(n, c, y, x);
                }
        d_gamma[c] = sdx;
        d_beta[c] = sd;
        double k = gamma[c] * inv_std[c] / m;
        for (int n = 0; n < xhat.count; ++n)
            for (int y = 0; y < xhat.height; ++y)
                for (int x = 0; x < xhat.width; ++x) {
                    double g = d_out.at(n, c, y, x);
                    d_in.at(n, c, y, x) = k * (m * g - sd - xhat.at(n, c, y, x) * sdx);
                }
    }
}

}  // namespace laf::ref

#include "laf/kernels.hpp"

#include <cblas.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace laf::kernels {

namespace {

// BLAS threading stays off; parallelism lives in the batch loops here.
void pin_blas_threads() {
    static std::once_flag flag;
    std::call_once(flag, [] { openblas_set_num_threads(1); });
}

void im2col(const double* src, int C, int H, int W, int kernel, int stride, int pad, double* col) {
    int oh = conv_out_extent(H, kernel, stride, pad);
    int ow = conv_out_extent(W, kernel, stride, pad);
    size_t P = static_cast<size_t>(oh) * ow;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
                double* row = col + ((static_cast<size_t>(c) * kernel + ky) * kernel + kx) * P;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) {
                        for (int ox = 0; ox < ow; ++ox) row[static_cast<size_t>(oy) * ow + ox] = 0.0;
                        continue;
                    }
                    const double* src_row = src + (static_cast<size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + kx - pad;
                        row[static_cast<size_t>(oy) * ow + ox] = (ix < 0 || ix >= W) ? 0.0 : src_row[ix];
                    }
                }
            }
}

void col2im(const double* col, int C, int H, int W, int kernel, int stride, int pad, double* dst) {
    int oh = conv_out_extent(H, kernel, stride, pad);
    int ow = conv_out_extent(W, kernel, stride, pad);
    size_t P = static_cast<size_t>(oh) * ow;
    std::fill(dst, dst + static_cast<size_t>(C) * H * W, 0.0);
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
                const double* row = col + ((static_cast<size_t>(c) * kernel + ky) * kernel + kx) * P;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    double* dst_row = dst + (static_cast<size_t>(c) * H + iy) * W;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < W) dst_row[ix] += row[static_cast<size_t>(oy) * ow + ox];
                    }
                }
            }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    pin_blas_threads();
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void conv2d_forward(const Tensor4& in, const std::vector<double>& weight, const std::vector<double>* bias,
                    const ConvShape& sh, Tensor4& out) {
    if (in.channels != sh.in_channels) throw InvalidArgument("conv input channel mismatch");
    if (weight.size() != static_cast<size_t>(sh.out_channels) * sh.in_channels * sh.kernel * sh.kernel)
        throw InvalidArgument("conv weight size mismatch");
    pin_blas_threads();
    int oh = conv_out_extent(in.height, sh.kernel, sh.stride, sh.pad);
    int ow = conv_out_extent(in.width, sh.kernel, sh.stride, sh.pad);
    out = Tensor4(in.count, sh.out_channels, oh, ow);
    int K = sh.in_channels * sh.kernel * sh.kernel;
    size_t P = static_cast<size_t>(oh) * ow;
#pragma omp parallel
    {
        std::vector<double> col(static_cast<size_t>(K) * P);
#pragma omp for schedule(static)
        for (int n = 0; n < in.count; ++n) {
            im2col(in.item(n), sh.in_channels, in.height, in.width, sh.kernel, sh.stride, sh.pad, col.data());
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, sh.out_channels, static_cast<int>(P), K,
                        1.0, weight.data(), K, col.data(), static_cast<int>(P), 0.0, out.item(n),
                        static_cast<int>(P));
            if (bias) {
                double* o = out.item(n);
                for (int co = 0; co < sh.out_channels; ++co)
                    for (size_t p = 0; p < P; ++p) o[co * P + p] += (*bias)[co];
            }
        }
    }
}

void conv2d_backward(const Tensor4& in, const std::vector<double>& weight, const ConvShape& sh,
                     const Tensor4& d_out, Tensor4& d_in, std::vector<double>& d_weight,
                     std::vector<double>* d_bias) {
    pin_blas_threads();
    int K = sh.in_channels * sh.kernel * sh.kernel;
    size_t P = static_cast<size_t>(d_out.height) * d_out.width;
    d_in = Tensor4(in.count, in.channels, in.height, in.width);
    // Per-item weight gradients, folded in item order after the parallel loop.
    std::vector<std::vector<double>> dw_part(in.count);
    std::vector<std::vector<double>> db_part;
    if (d_bias) db_part.resize(in.count);
#pragma omp parallel
    {
        std::vector<double> col(static_cast<size_t>(K) * P);
        std::vector<double> dcol(static_cast<size_t>(K) * P);
#pragma omp for schedule(static)
        for (int n = 0; n < in.count; ++n) {
            im2col(in.item(n), sh.in_channels, in.height, in.width, sh.kernel, sh.stride, sh.pad, col.data());
            // d_weight partial: dY (Cout x P) * col^T (P x K)
            dw_part[n].assign(weight.size(), 0.0);
            cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, sh.out_channels, K, static_cast<int>(P), 1.0,
                        d_out.item(n), static_cast<int>(P), col.data(), static_cast<int>(P), 0.0,
                        dw_part[n].data(), K);
            // d_col = W^T (K x Cout) * dY (Cout x P)
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, K, static_cast<int>(P), sh.out_channels, 1.0,
                        weight.data(), K, d_out.item(n), static_cast<int>(P), 0.0, dcol.data(),
                        static_cast<int>(P));
            col2im(dcol.data(), sh.in_channels, in.height, in.width, sh.kernel, sh.stride, sh.pad, d_in.item(n));
            if (d_bias) {
                db_part[n].assign(static_cast<size_t>(sh.out_channels), 0.0);
                const double* g = d_out.item(n);
                for (int co = 0; co < sh.out_channels; ++co)
                    for (size_t p = 0; p < P; ++p) db_part[n][co] += g[co * P + p];
            }
        }
    }
    d_weight.assign(weight.size(), 0.0);
    for (int n = 0; n < in.count; ++n)
        for (size_t i = 0; i < d_weight.size(); ++i) d_weight[i] += dw_part[n][i];
    if (d_bias) {
        d_bias->assign(static_cast<size_t>(sh.out_channels), 0.0);
        for (int n = 0; n < in.count; ++n)
            for (int co = 0; co < sh.out_channels; ++co) (*d_bias)[co] += db_part[n][co];
    }
}

void avgpool_forward(const Tensor4& in, int window, Tensor4& out) {
    if (window <= 0) throw InvalidArgument("pool window must be positive");
    int oh = (in.height + window - 1) / window;
    int ow = (in.width + window - 1) / window;
    out = Tensor4(in.count, in.channels, oh, ow);
#pragma omp parallel for schedule(static)
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
#pragma omp parallel for schedule(static)
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
    pin_blas_threads();
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, n, d_out, d_in, 1.0, x, d_in, w.data(), d_in, 0.0,
                y, d_out);
    if (!b.empty()) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i)
            for (int o = 0; o < d_out; ++o) y[static_cast<size_t>(i) * d_out + o] += b[o];
    }
}

void fc_backward(const double* x, int n, int d_in, const std::vector<double>& w, int d_out, const double* d_y,
                 double* d_x, std::vector<double>& d_w, std::vector<double>& d_b) {
    pin_blas_threads();
    d_w.assign(static_cast<size_t>(d_out) * d_in, 0.0);
    d_b.assign(static_cast<size_t>(d_out), 0.0);
    // dW = dY^T * X, one GEMM, deterministic.
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, d_out, d_in, n, 1.0, d_y, d_out, x, d_in, 0.0,
                d_w.data(), d_in);
    // db: serial over batch per output unit.
#pragma omp parallel for schedule(static)
    for (int o = 0; o < d_out; ++o) {
        double s = 0;
        for (int i = 0; i < n; ++i) s += d_y[static_cast<size_t>(i) * d_out + o];
        d_b[o] = s;
    }
    // dX = dY * W
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, n, d_in, d_out, 1.0, d_y, d_out, w.data(), d_in,
                0.0, d_x, d_in);
}

void relu_forward(const double* x, size_t n, double* y) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
}

void relu_backward(const double* y, const double* d_y, size_t n, double* d_x) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) d_x[i] = y[i] > 0 ? d_y[i] : 0.0;
}

void bn_forward_train(const Tensor4& in, const std::vector<double>& gamma, const std::vector<double>& beta,
                      double eps, Tensor4& out, Tensor4& xhat, std::vector<double>& mean,
                      std::vector<double>& var) {
    int C = in.channels;
    size_t plane = static_cast<size_t>(in.height) * in.width;
    size_t m = static_cast<size_t>(in.count) * plane;
    out = Tensor4(in.count, C, in.height, in.width);
    xhat = Tensor4(in.count, C, in.height, in.width);
    mean.assign(C, 0.0);
    var.assign(C, 0.0);
    // Per-item partial sums, folded in item order.
    std::vector<double> s1(static_cast<size_t>(in.count) * C, 0.0);
    std::vector<double> s2(static_cast<size_t>(in.count) * C, 0.0);
#pragma omp parallel for schedule(static)
    for (int n = 0; n < in.count; ++n)
        for (int c = 0; c < C; ++c) {
            const double* p = in.item(n) + c * plane;
            double a = 0, b = 0;
            for (size_t i = 0; i < plane; ++i) {
                a += p[i];
                b += p[i] * p[i];
            }
            s1[static_cast<size_t>(n) * C + c] = a;
            s2[static_cast<size_t>(n) * C + c] = b;
        }
    for (int c = 0; c < C; ++c) {
        double a = 0, b = 0;
        for (int n = 0; n < in.count; ++n) {
            a += s1[static_cast<size_t>(n) * C + c];
            b += s2[static_cast<size_t>(n) * C + c];
        }
        mean[c] = a / m;
        double v = b / m - mean[c] * mean[c];
        var[c] = v > 0 ? v : 0.0;
    }
#pragma omp parallel for schedule(static)
    for (int n = 0; n < in.count; ++n)
        for (int c = 0; c < C; ++c) {
            double inv = 1.0 / std::sqrt(var[c] + eps);
            const double* p = in.item(n) + c * plane;
            double* xh = xhat.item(n) + c * plane;
            double* o = out.item(n) + c * plane;
            for (size_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - mean[c]) * inv;
                o[i] = gamma[c] * xh[i] + beta[c];
            }
        }
}

void bn_forward_eval(const Tensor4& in, const std::vector<double>& gamma, const std::vector<double>& beta,
                     const std::vector<double>& running_mean, const std::vector<double>& running_var,
                     double eps, Tensor4& out) {
    int C = in.channels;
    size_t plane = static_cast<size_t>(in.height) * in.width;
    out = Tensor4(in.count, C, in.height, in.width);
#pragma omp parallel for schedule(static)
    for (int n = 0; n < in.count; ++n)
        for (int c = 0; c < C; ++c) {
            double inv = 1.0 / std::sqrt(running_var[c] + eps);
            const double* p = in.item(n) + c * plane;
            double* o = out.item(n) + c * plane;
            for (size_t i = 0; i < plane; ++i) o[i] = gamma[c] * (p[i] - running_mean[c]) * inv + beta[c];
        }
}

void bn_backward(const Tensor4& xhat, const std::vector<double>& gamma, const std::vector<double>& inv_std,
                 const Tensor4& d_out, Tensor4& d_in, std::vector<double>& d_gamma, std::vector<double>& d_beta) {
    int C = xhat.channels;
    size_t plane = static_cast<size_t>(xhat.height) * xhat.width;
    double m = static_cast<double>(xhat.count) * plane;
    d_in = Tensor4(xhat.count, C, xhat.height, xhat.width);
    d_gamma.assign(C, 0.0);
    d_beta.assign(C, 0.0);
    std::vector<double> sd_part(static_cast<size_t>(xhat.count) * C, 0.0);
    std::vector<double> sdx_part(static_cast<size_t>(xhat.count) * C, 0.0);
#pragma omp parallel for schedule(static)
    for (int n = 0; n < xhat.count; ++n)
        for (int c = 0; c < C; ++c) {
            const double* g = d_out.item(n) + c * plane;
            const double* xh = xhat.item(n) + c * plane;
            double a = 0, b = 0;
            for (size_t i = 0; i < plane; ++i) {
                a += g[i];
                b += g[i] * xh[i];
            }
            sd_part[static_cast<size_t>(n) * C + c] = a;
            sdx_part[static_cast<size_t>(n) * C + c] = b;
        }
    std::vector<double> sd(C, 0.0), sdx(C, 0.0);
    for (int c = 0; c < C; ++c) {
        for (int n = 0; n < xhat.count; ++n) {
            sd[c] += sd_part[static_cast<size_t>(n) * C + c];
            sdx[c] += sdx_part[static_cast<size_t>(n) * C + c];
        }
        d_beta[c] = sd[c];
        d_gamma[c] = sdx[c];
    }
#pragma omp parallel for schedule(static)
    for (int n = 0; n < xhat.count; ++n)
        for (int c = 0; c < C; ++c) {
            double k = gamma[c] * inv_std[c] / m;
            const double* g = d_out.item(n) + c * plane;
            const double* xh = xhat.item(n) + c * plane;
            double* di = d_in.item(n) + c * plane;
            for (size_t i = 0; i < plane; ++i) di[i] = k * (m * g[i] - sd[c] - xh[i] * sdx[c]);
        }
}

void adam_step(std::vector<double>& param, const std::vector<double>& grad, AdamState& state, long step,
               double lr, double beta1, double beta2, double eps) {
    if (state.m.size() != param.size()) {
        state.m.assign(param.size(), 0.0);
        state.v.assign(param.size(), 0.0);
    }
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(param.size()); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        double mh = state.m[i] / bc1;
        double vh = state.v[i] / bc2;
        param[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
}

void sgd_momentum_step(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& velocity,
                       double lr, double momentum) {
    if (velocity.size() != param.size()) velocity.assign(param.size(), 0.0);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(param.size()); ++i) {
        velocity[i] = momentum * velocity[i] + grad[i];
        param[i] -= lr * velocity[i];
    }
}

void upsample_plane_bilinear(const double* src, int h, int w, double* dst, int out_h, int out_w) {
    double sy = static_cast<double>(h) / out_h;
    double sx = static_cast<double>(w) / out_w;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int ya = std::clamp(y0, 0, h - 1);
        int yb = std::clamp(y0 + 1, 0, h - 1);
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int xa = std::clamp(x0, 0, w - 1);
            int xb = std::clamp(x0 + 1, 0, w - 1);
            double top = src[static_cast<size_t>(ya) * w + xa] * (1 - wx) + src[static_cast<size_t>(ya) * w + xb] * wx;
            double bot = src[static_cast<size_t>(yb) * w + xa] * (1 - wx) + src[static_cast<size_t>(yb) * w + xb] * wx;
            dst[static_cast<size_t>(y) * out_w + x] = top * (1 - wy) + bot * wy;
        }
    }
}

}  // namespace laf::kernels

#pragma once

#include <vector>

#include "laf/ref_kernels.hpp"
#include "laf/tensor.hpp"

// Optimized kernels: OpenMP across independent output slots, GEMM-backed
// convolution and fully connected layers. Every reduction that crosses batch
// items accumulates per-item partials and folds them in item order, so
// results are bit-identical for any thread count.
namespace laf::kernels {

using laf::ref::conv_out_extent;
using laf::ref::ConvShape;

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

void conv2d_forward(const Tensor4& in, const std::vector<double>& weight, const std::vector<double>* bias,
                    const ConvShape& shape, Tensor4& out);

void conv2d_backward(const Tensor4& in, const std::vector<double>& weight, const ConvShape& shape,
                     const Tensor4& d_out, Tensor4& d_in, std::vector<double>& d_weight,
                     std::vector<double>* d_bias);

void avgpool_forward(const Tensor4& in, int window, Tensor4& out);
void avgpool_backward(int in_h, int in_w, int window, const Tensor4& d_out, Tensor4& d_in);

void fc_forward(const double* x, int n, int d_in, const std::vector<double>& w, const std::vector<double>& b,
                int d_out, double* y);
void fc_backward(const double* x, int n, int d_in, const std::vector<double>& w, int d_out, const double* d_y,
                 double* d_x, std::vector<double>& d_w, std::vector<double>& d_b);

void relu_forward(const double* x, size_t n, double* y);
void relu_backward(const double* y, const double* d_y, size_t n, double* d_x);

void bn_forward_train(const Tensor4& in, const std::vector<double>& gamma, const std::vector<double>& beta,
                      double eps, Tensor4& out, Tensor4& xhat, std::vector<double>& mean,
                      std::vector<double>& var);
void bn_forward_eval(const Tensor4& in, const std::vector<double>& gamma, const std::vector<double>& beta,
                     const std::vector<double>& running_mean, const std::vector<double>& running_var,
                     double eps, Tensor4& out);
void bn_backward(const Tensor4& xhat, const std::vector<double>& gamma, const std::vector<double>& inv_std,
                 const Tensor4& d_out, Tensor4& d_in, std::vector<double>& d_gamma, std::vector<double>& d_beta);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
};

void adam_step(std::vector<double>& param, const std::vector<double>& grad, AdamState& state, long step,
               double lr, double beta1, double beta2, double eps);

void sgd_momentum_step(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& velocity,
                       double lr, double momentum);

// Bilinear plane upsample with edge clamping (used by the CAM path).
void upsample_plane_bilinear(const double* src, int h, int w, double* dst, int out_h, int out_w);

}  // namespace laf::kernels

#pragma once

#include <vector>

#include "laf/tensor.hpp"

// Serial reference kernels. Straight loops, no BLAS, no threads. These are
// the ground truth the optimized kernels are tested against and the baseline
// the benchmark compares with.
namespace laf::ref {

struct ConvShape {
    int out_channels = 0;
    int in_channels = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;
};

inline int conv_out_extent(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

// C[m x n] = alpha * op(A) * op(B) + beta * C, row-major.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

void conv2d_forward(const Tensor4& in, const std::vector<double>& weight, const std::vector<double>* bias,
                    const ConvShape& shape, Tensor4& out);

void conv2d_backward(const Tensor4& in, const std::vector<double>& weight, const ConvShape& shape,
                     const Tensor4& d_out, Tensor4& d_in, std::vector<double>& d_weight,
                     std::vector<double>* d_bias);

// Non-overlapping pooling, ceil mode, partial windows divide by their count.
void avgpool_forward(const Tensor4& in, int window, Tensor4& out);
void avgpool_backward(int in_h, int in_w, int window, const Tensor4& d_out, Tensor4& d_in);

// y = x * w^T + b with x [n x d_in], w [d_out x d_in].
void fc_forward(const double* x, int n, int d_in, const std::vector<double>& w, const std::vector<double>& b,
                int d_out, double* y);
void fc_backward(const double* x, int n, int d_in, const std::vector<double>& w, int d_out, const double* d_y,
                 double* d_x, std::vector<double>& d_w, std::vector<double>& d_b);

void relu_forward(const double* x, size_t n, double* y);
void relu_backward(const double* y, const double* d_y, size_t n, double* d_x);

// Training-mode batch norm: population statistics over N*H*W per channel.
void bn_forward_train(const Tensor4& in, const std::vector<double>& gamma, const std::vector<double>& beta,
                      double eps, Tensor4& out, Tensor4& xhat, std::vector<double>& mean,
                      std::vector<double>& var);

void bn_backward(const Tensor4& xhat, const std::vector<double>& gamma, const std::vector<double>& inv_std,
                 const Tensor4& d_out, Tensor4& d_in, std::vector<double>& d_gamma, std::vector<double>& d_beta);

}  // namespace laf::ref

#pragma once

#include <cstddef>

// Dense kernels shared by the autodiff graph. The omp variants parallelize
// over independent rows/samples only; every output element is accumulated in
// the same fixed order as the serial reference, so results are bit-identical
// for any thread count. tests/test_kernels.cpp asserts that equality.

namespace anchorlab::kernels {

// C[m x p] = A[m x k] * B[k x p]   (+= when accumulate)
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int p,
             bool accumulate = false);

// out[c x r] = transpose of in[r x c]
void transpose(const double* in, double* out, int r, int c);

void add(const double* a, const double* b, double* out, size_t count);
void axpy(double alpha, const double* x, double* y, size_t count);  // y += alpha*x
void scale(const double* a, double alpha, double* out, size_t count);

void relu_forward(const double* x, double* y, size_t count);
// dx += dy * (x > 0)
void relu_backward(const double* x, const double* dy, double* dx, size_t count);

// Row-wise softmax with max-subtraction. With causal=true the matrix must be
// square per n-row block and entries above the block diagonal come out
// exactly 0 (additive -1e30 before normalization).
void softmax_rows(const double* x, double* y, int rows, int cols, bool causal = false,
                  int block = 0);
// dx += softmax backward given the forward output y.
void softmax_rows_backward(const double* y, const double* dy, double* dx, int rows, int cols);

// y = (x - mean)/sqrt(var + eps) * gain + bias, per row; saves mean/rstd.
void layer_norm_forward(const double* x, const double* gain, const double* bias, double* y,
                        double* mean, double* rstd, int rows, int cols, double eps);
void layer_norm_backward(const double* x, const double* gain, const double* mean,
                         const double* rstd, const double* dy, double* dx, double* dgain,
                         double* dbias, int rows, int cols);

// Scaled dot-product attention for `batch` independent blocks of n rows.
// q,k,v are (batch*n) x dh. attn holds batch n x n row-stochastic maps.
// With override != nullptr the n x n map is forced to it for every sample.
void attention_forward(const double* q, const double* k, const double* v, double* attn,
                       double* out, int batch, int n, int dh, bool mask,
                       const double* override_attn = nullptr);
// Accumulates into dq, dk, dv. With override, dq/dk receive nothing.
void attention_backward(const double* q, const double* k, const double* v, const double* attn,
                        const double* dout, double* dq, double* dk, double* dv, int batch,
                        int n, int dh, bool overridden);

// Serial reference implementations (naive loops, same accumulation order).
namespace ref {
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int p,
             bool accumulate = false);
void softmax_rows(const double* x, double* y, int rows, int cols, bool causal = false,
                  int block = 0);
void layer_norm_forward(const double* x, const double* gain, const double* bias, double* y,
                        double* mean, double* rstd, int rows, int cols, double eps);
void attention_forward(const double* q, const double* k, const double* v, double* attn,
                       double* out, int batch, int n, int dh, bool mask,
                       const double* override_attn = nullptr);
}  // namespace ref

}  // namespace anchorlab::kernels

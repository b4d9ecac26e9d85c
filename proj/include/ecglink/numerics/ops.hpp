#pragma once

// Differentiable tensor operations. Matrices are rank-2 row-major tensors;
// bias and gain vectors are rank-1. Shape violations throw DimensionError
// naming the offending shapes.

#include <cstddef>
#include <span>
#include <vector>

#include "ecglink/numerics/tensor.hpp"

namespace ecglink::numerics {

// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x k] * [n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// x [n x in] * w[out x in]^T + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
// x [n x m] + v[m] broadcast over rows.
Tensor add_rowwise(const Tensor& x, const Tensor& v);
Tensor scale(const Tensor& x, double factor);
// Elementwise product with a constant (non-differentiated) mask.
Tensor mul_constant(const Tensor& x, std::span<const double> mask);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
// Normalizes each row over the last axis; gain/bias match that extent.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Exact (erf) GELU.
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);

// Mean over the batch of -log softmax(logits)[target]. Targets in [0, C).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
// Row i of a matrix as a [1 x cols] matrix.
Tensor select_row(const Tensor& x, std::size_t row);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Batch normalization of x [batch x features] with batch statistics (biased
// variance). The statistics used are written to batch_mean / batch_var.
Tensor batch_norm_train(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                        std::vector<double>& batch_mean, std::vector<double>& batch_var);
// Batch normalization with fixed statistics.
Tensor batch_norm_eval(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       std::span<const double> mean, std::span<const double> var, double eps);

}  // namespace ecglink::numerics

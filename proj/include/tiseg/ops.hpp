#pragma once

#include <vector>

#include "tiseg/tensor.hpp"

// Differentiable tensor operations. Image tensors are NCHW; token matrices are
// rows x features.
namespace tiseg {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// a * s and a / s where s is a single-element tensor.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
Tensor div_scalar(const Tensor& a, const Tensor& s);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_squares(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);

// 2-D matrix product with optional transposition of either operand.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
// x[n, m] + b[m] broadcast over rows.
Tensor add_rowwise(const Tensor& x, const Tensor& b);

// Row softmax of (x * logit_scale).
Tensor softmax_rows(const Tensor& x, double logit_scale = 1.0);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int64_t begin, int64_t end);

// NCHW -> (N*H*W) x C with row-major pixel order inside each image, and back.
Tensor nchw_to_rows(const Tensor& x);
Tensor rows_to_nchw(const Tensor& rows, int64_t n, int64_t h, int64_t w);

// im2col: NCHW -> (N*OH*OW) x (C*k*k), column order (c, ky, kx).
Tensor unfold(const Tensor& x, int kernel, int stride, int pad);
// Cross-correlation; weight is OC x IC x k x k, bias may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad);
Tensor upsample_nearest(const Tensor& x, int factor);

// Mean binary cross-entropy over all elements; targets carry no gradient.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

}  // namespace tiseg

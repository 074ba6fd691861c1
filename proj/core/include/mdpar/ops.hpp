#pragma once

#include <vector>

#include "mdpar/tensor.hpp"

namespace mdpar {

// Differentiable primitive operations. Every op validates shapes loudly and
// registers a reverse-mode rule when gradients are enabled and some input
// requires them. Broadcasting is deliberately absent except for the few
// explicit *_rows forms below; anything else is a shape error.

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);

// x[r x c] + row vector v[c] broadcast over rows.
Tensor add_rows(const Tensor& x, const Tensor& v);

// Standard matrix product, a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);  // 2-D

// Same data, new shape (numel preserved, row-major).
Tensor reshape(const Tensor& x, std::vector<int> shape);

// Concatenation / slicing along rows or columns of 2-D tensors.
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int offset, int count);
Tensor slice_cols(const Tensor& x, int offset, int count);

// Stacks k same-shape tensors into a new leading dimension of size k.
Tensor stack0(const std::vector<Tensor>& parts);

// Row-stabilized softmax over the last dimension of a 2-D tensor.
Tensor softmax_rows(const Tensor& x);

// Per-row normalization over the last dimension, then affine by gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  Scalar eps);

// Elementwise nonlinearities.
Tensor gelu(const Tensor& x);  // exact erf form
Tensor sigmoid(const Tensor& x);

Tensor sum_all(const Tensor& x);  // -> scalar [1]

// out[i] = dot(a[i, :], b[i, :]) for a, b of identical [r x c] shape.
Tensor rowwise_dot(const Tensor& a, const Tensor& b);

// Per-column batch normalization over the leading (batch) dimension of
// x[B x C] using batch statistics (biased variance). Batch mean/variance are
// reported through the out-parameters for running-stat upkeep; they are not
// differentiated through.
Tensor batchnorm_train(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       Scalar eps, std::vector<Scalar>* batch_mean,
                       std::vector<Scalar>* batch_var);

// Same affine normalization but against fixed (running) statistics.
Tensor batchnorm_eval(const Tensor& x, const Tensor& gain, const Tensor& bias,
                      const std::vector<Scalar>& running_mean,
                      const std::vector<Scalar>& running_var, Scalar eps);

}  // namespace mdpar

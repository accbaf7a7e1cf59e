#pragma once

#include <vector>

#include "mome/tensor.hpp"

namespace mome {

// Value-level kernels. The autodiff graph calls these for its forward pass;
// they are also usable standalone wherever no gradient is needed.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

double sigmoid_scalar(double x);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor relu(const Tensor& a);

// Numerically stable softmax applied to each row independently; every output
// row sums to 1 within 1e-12.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

// Row-wise layer norm without affine parameters.
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5);

Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b);

double sum_all(const Tensor& a);
double mean_all(const Tensor& a);

double dot(const Tensor& a, const Tensor& b);
// L2 norm of all entries.
double norm(const Tensor& a);

// Least-squares slope of y against x = 0..n-1. Throws for n < 2.
double linear_slope(const std::vector<double>& y);

}  // namespace mome

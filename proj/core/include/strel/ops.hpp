#pragma once

#include <vector>

#include "strel/tensor.hpp"

namespace strel::ops {

enum class Reduce { Mean, Max };

// Elementwise, shapes must match exactly (no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

// Sum of any number of identically shaped tensors.
Tensor add_n(const std::vector<Tensor>& parts);

// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& x);

// x[... x d] + b[d], broadcast over leading axes.
Tensor add_bias(const Tensor& x, const Tensor& b);

Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Stable softmax over the last axis; slices sum to one.
Tensor softmax_last(const Tensor& x);

// Per-last-axis-slice normalization followed by gain/bias. Biased variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Removes `axes` from the shape. Mean splits gradient uniformly; Max routes it
// to the first occurrence of the maximum.
Tensor reduce(const Tensor& x, std::vector<std::size_t> axes, Reduce mode);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
// Replicates an axis of extent 1.
Tensor expand(const Tensor& x, std::size_t axis, std::size_t times);

// x[Cin x T x H x W] (*) w[Cout x Cin x kt x kh x kw] + b[Cout], zero padding.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride_t, int stride_s,
              int pad_t, int pad_s);

}  // namespace strel::ops

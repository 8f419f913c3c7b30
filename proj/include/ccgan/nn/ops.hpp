#pragma once

#include <vector>

#include "ccgan/nn/autograd.hpp"

namespace ccgan::nn {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
};

/// Output extent of a convolution along one axis: floor((i + 2p - k)/s) + 1.
int conv_output_size(int input, int kernel, int stride, int padding);

/// weight: (out_c, in_c, k, k); bias: (1, out_c, 1, 1) or undefined.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, Conv2dOptions opt);

/// Running statistics owned by a batch-normalization layer.
template <class T>
struct BatchNormBuffers {
  Tensor<T> running_mean;  // (1, C, 1, 1)
  Tensor<T> running_var;   // (1, C, 1, 1)
  T momentum = T(0.1);
  T eps = T(1e-5);
};

/// Training mode normalizes with the minibatch statistics and updates the
/// running buffers (unbiased variance); inference mode uses the buffers.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormBuffers<T>& buffers,
                  bool training);

/// Per-sample, per-channel normalization over H x W, no affine terms.
template <class T>
Var<T> instance_norm(const Var<T>& x, T eps = T(1e-5));

template <class T>
Var<T> relu(const Var<T>& x);

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope);

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// Channel-wise concatenation; all inputs share N, H, W.
template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& xs);

// Scalar-valued reductions used by the objective.

/// mean((x - target)^2) over every element.
template <class T>
Var<T> mean_squared_to(const Var<T>& x, T target);

/// mean(|a - b|) over every element.
template <class T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);

/// Mean over frames of (1 - pearson(a_n, b_n)). Throws MetricError when a
/// frame has zero variance.
template <class T>
Var<T> one_minus_pearson(const Var<T>& a, const Var<T>& b);

/// sum_i w_i * s_i over one-element terms.
template <class T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights);

#define CCGAN_DECLARE_OPS(T)                                                                          \
  extern template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, Conv2dOptions);      \
  extern template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&,                  \
                                       BatchNormBuffers<T>&, bool);                                  \
  extern template Var<T> instance_norm<T>(const Var<T>&, T);                                         \
  extern template Var<T> relu<T>(const Var<T>&);                                                     \
  extern template Var<T> leaky_relu<T>(const Var<T>&, T);                                            \
  extern template Var<T> add<T>(const Var<T>&, const Var<T>&);                                       \
  extern template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                             \
  extern template Var<T> mean_squared_to<T>(const Var<T>&, T);                                       \
  extern template Var<T> mean_abs_diff<T>(const Var<T>&, const Var<T>&);                             \
  extern template Var<T> one_minus_pearson<T>(const Var<T>&, const Var<T>&);                         \
  extern template Var<T> weighted_sum<T>(const std::vector<Var<T>>&, const std::vector<T>&);

CCGAN_DECLARE_OPS(float)
CCGAN_DECLARE_OPS(double)
#undef CCGAN_DECLARE_OPS

}  // namespace ccgan::nn

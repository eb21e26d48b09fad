#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "prunecoder/tensor.hpp"

namespace prunecoder::ops {

/// Caps the number of worker threads matmul may use (default 1). Results are bitwise
/// identical for any setting because each output element is reduced in a fixed order.
void set_num_threads(int n);
int num_threads();

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
struct MatmulGrads {
    Tensor<T> da;
    Tensor<T> db;
};

/// dA = dC * B^T, dB = A^T * dC.
template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& dc);

/// y = x * W^T + bias with W stored [out_features, in_features].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct LinearGrads {
    Tensor<T> dx;
    Tensor<T> dweight;
    Tensor<T> dbias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy);

/// Numerically stable softmax along `axis` (negative values count from the end).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

/// Gradient w.r.t. the softmax input given its output `y` and upstream gradient `dy`.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy, int axis = -1);

/// Row-wise normalization over the last axis with biased variance, then gamma * x_hat + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps);

template <typename T>
struct LayerNormGrads {
    Tensor<T> dx;
    Tensor<T> dgamma;
    Tensor<T> dbeta;
};

template <typename T>
LayerNormGrads<T> layer_norm_backward(const Tensor<T>& x, const Tensor<T>& gamma, double eps,
                                      const Tensor<T>& dy);

/// Exact GELU: x * Phi(x).
template <typename T>
T gelu(T x);

template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& dy);

template <typename T>
Tensor<T> tanh(const Tensor<T>& x);

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& dy);

template <typename T>
struct CrossEntropy {
    T loss;
    Tensor<T> dlogits;  // gradient of the mean loss
};

/// Mean over the batch of -log softmax(logits)[label].
template <typename T>
CrossEntropy<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

struct DropoutKey {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::uint64_t tensor_id = 0;
};

template <typename T>
struct DropoutResult {
    Tensor<T> output;
    Tensor<T> scale;  // 0 or 1/(1-p) per element; the backward pass multiplies by it
};

/// Inverted dropout. Each element's keep decision is a pure function of (key, element index).
template <typename T>
DropoutResult<T> dropout(const Tensor<T>& x, double p, DropoutKey key);

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x);

/// A forward value paired with its vector-Jacobian product.
template <typename T>
struct Dual {
    Tensor<T> output;
    std::function<std::vector<Tensor<T>>(const Tensor<T>& grad_output)> backward;
};

template <typename T>
Dual<T> dual_matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Dual<T> dual_linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
template <typename T>
Dual<T> dual_softmax(const Tensor<T>& x, int axis = -1);
template <typename T>
Dual<T> dual_layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps);
template <typename T>
Dual<T> dual_gelu(const Tensor<T>& x);
template <typename T>
Dual<T> dual_tanh(const Tensor<T>& x);

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    std::size_t coordinates = 0;
};

using Primitive = std::function<Dual<double>(const std::vector<TensorD>& inputs)>;

/// Compares a primitive's analytic backward against central differences. The primitive is
/// reduced to a scalar by a fixed random projection of its output (seeded by `probe_seed`).
GradCheckResult grad_check(const Primitive& primitive, const std::vector<TensorD>& point, double h,
                           std::uint64_t probe_seed = 0);

/// Central-difference check of a scalar function against a supplied analytic gradient.
GradCheckResult grad_check_scalar(const std::function<double(std::span<const double>)>& loss,
                                  std::span<const double> point, std::span<const double> analytic,
                                  double h);

}  // namespace prunecoder::ops

#pragma once

// Forward operations and their analytic gradients. Every *_backward function
// ADDS into the gradient tensors it is given; callers zero them first.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amc/tensor.hpp"

namespace amc {

enum class Padding { Valid, Same };

struct Conv2dSpec {
    std::size_t groups = 1;
    std::size_t dilation_h = 1;
    std::size_t dilation_w = 1;
    Padding pad_h = Padding::Same;
    Padding pad_w = Padding::Same;
};

// Output shape of a stride-1 convolution, validating groups and kernel fit.
Shape conv2d_output_shape(const Shape& input, const Shape& kernels, const Conv2dSpec& spec);

// Grouped, dilated cross-correlation. input: H x W x Cin,
// kernels: kh x kw x (Cin/groups) x Cout, optional bias: Cout.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Conv2dSpec& spec,
                 const Tensor<T>* bias = nullptr);

template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels, const Conv2dSpec& spec,
                     const Tensor<T>& grad_out, Tensor<T>* grad_input, Tensor<T>* grad_kernels,
                     Tensor<T>* grad_bias = nullptr);

// Max pooling with window (1,2) and stride (1,2). Ties go to the lower index.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input);

template <typename T>
void maxpool2d_backward(const Tensor<T>& input, const Tensor<T>& grad_out, Tensor<T>& grad_input);

// H x W x C -> C
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);

template <typename T>
void global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out, Tensor<T>& grad_input);

// y = x W (+ b). weights: Cin x Cout.
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias = nullptr);

template <typename T>
void dense_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out,
                    Tensor<T>* grad_input, Tensor<T>* grad_weights, Tensor<T>* grad_bias = nullptr);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

// pre_activation is the relu input; the subgradient at 0 is 0.
template <typename T>
void relu_backward(const Tensor<T>& pre_activation, const Tensor<T>& grad_out, Tensor<T>& grad_input);

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
struct ParamBlock {
    std::string name;
    Tensor<T>* value;
};

template <typename T>
struct AdamState {
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<Tensor<T>> first_moment;
    std::vector<Tensor<T>> second_moment;
};

// Bias-corrected Adam. Moments are allocated on the first call. Throws
// NonFinite naming the block if any gradient is NaN/Inf; nothing is updated
// in that case.
template <typename T>
void adam_step(std::span<const ParamBlock<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state,
               double learning_rate);

}  // namespace amc

#pragma once

// AFNet: a (2,5) convolution with 48 filters, nine adaptive-fusion units
// with two (1,2) max pools between them, then global average pooling and a
// dense softmax head.
//
// An AF unit runs two grouped branches over its input X
//   P = relu(conv_small(X))   kernel (1,3)
//   Q = relu(conv_large(X))   kernel (1,3), dilation (1,2) -> span 5
// and merges them with two attention fusions
//   U = fuse(P, Q; lambda = 1)
//   Y = fuse(X, U; lambda = 2)
// where fuse(A, B) = alpha * A + beta * B channel-wise with
//   s = GAP(A + B), z = relu(s W1), a = z W2, b = z W3,
//   alpha_c = lambda e^{a_c} / (e^{a_c} + e^{b_c}), beta_c = lambda - alpha_c.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amc/ops.hpp"
#include "amc/tensor.hpp"

namespace amc {

struct ModelConfig {
    std::size_t channels = 48;
    std::size_t compression = 16;
    std::size_t units = 9;
    std::vector<std::size_t> pool_after = {3, 6};  // 1-based unit indices
    std::size_t groups = 2;
    std::size_t classes = 11;
    std::size_t frame_length = 128;

    static constexpr std::size_t kFirstKernelHeight = 2;
    static constexpr std::size_t kFirstKernelWidth = 5;
    static constexpr std::size_t kBranchKernelWidth = 3;
    static constexpr std::size_t kLargeBranchDilation = 2;

    std::size_t squeeze_dim() const { return channels / compression; }
    // Throws InvalidArgument describing the first violated constraint.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;

    // C=8, r=4, 2 units, N=16; used for full-network gradient checks.
    static ModelConfig tiny();
};

// 3 C^2 / r: values held by one fusion module's three bias-free maps.
std::size_t count_fusion_params(std::size_t channels, std::size_t compression);

template <typename T>
struct FusionParams {
    Tensor<T> squeeze;  // C x d
    Tensor<T> to_a;     // d x C
    Tensor<T> to_b;     // d x C
    double lambda = 1.0;

    std::size_t value_count() const { return squeeze.size() + to_a.size() + to_b.size(); }
};

template <typename T>
struct AFUnitParams {
    Tensor<T> small_kernels;  // 1 x 3 x C/g x C
    Tensor<T> large_kernels;  // 1 x 3 x C/g x C, dilation (1,2)
    FusionParams<T> branch_fusion;  // lambda = 1
    FusionParams<T> skip_fusion;    // lambda = 2
};

template <typename T>
struct AFNetParams {
    ModelConfig config;
    Tensor<T> conv1_kernels;  // 2 x 5 x 1 x C
    Tensor<T> conv1_bias;     // C
    std::vector<AFUnitParams<T>> units;
    Tensor<T> head_weights;  // C x M
    Tensor<T> head_bias;     // M

    // Parameter blocks in checkpoint order:
    //   conv1.kernels, conv1.bias,
    //   unit<i>.{small,large,fusion1.{squeeze,a,b},fusion2.{squeeze,a,b}},
    //   head.weights, head.bias
    std::vector<ParamBlock<T>> blocks();
    std::vector<std::pair<std::string, const Tensor<T>*>> blocks() const;

    std::size_t parameter_count() const;
    // Same structure, every value zero.
    AFNetParams zeros_like() const;

    template <typename U>
    AFNetParams<U> cast() const;
};

// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
template <typename T>
AFNetParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> lambda_softmax(const Tensor<T>& a, const Tensor<T>& b, double lambda);

template <typename T>
struct FusionCache {
    Tensor<T> pooled;       // GAP(A + B)
    Tensor<T> squeeze_pre;  // pooled * W1
    Tensor<T> squeezed;     // relu(squeeze_pre)
    Tensor<T> alpha;
    Tensor<T> beta;
};

template <typename T>
Tensor<T> fusion_forward(const Tensor<T>& A, const Tensor<T>& B, const FusionParams<T>& params,
                         FusionCache<T>* cache = nullptr);

template <typename T>
void fusion_backward(const Tensor<T>& A, const Tensor<T>& B, const FusionParams<T>& params, const FusionCache<T>& cache,
                     const Tensor<T>& grad_out, Tensor<T>& grad_A, Tensor<T>& grad_B, FusionParams<T>& grad_params);

template <typename T>
struct AFUnitCache {
    Tensor<T> input;
    Tensor<T> small_pre, large_pre;
    Tensor<T> small, large;
    Tensor<T> fused;  // U
    FusionCache<T> branch;
    FusionCache<T> skip;
};

Conv2dSpec small_branch_spec(const ModelConfig& config);
Conv2dSpec large_branch_spec(const ModelConfig& config);
Conv2dSpec first_conv_spec();

template <typename T>
Tensor<T> af_unit_forward(const Tensor<T>& input, const AFUnitParams<T>& params, const ModelConfig& config,
                          AFUnitCache<T>* cache = nullptr);

template <typename T>
void af_unit_backward(const AFUnitParams<T>& params, const ModelConfig& config, const AFUnitCache<T>& cache,
                      const Tensor<T>& grad_out, Tensor<T>& grad_input, AFUnitParams<T>& grad_params);

template <typename T>
struct NetworkCache {
    Tensor<T> frame;  // 2 x N x 1
    Tensor<T> conv1_pre;
    std::vector<AFUnitCache<T>> units;
    std::vector<Tensor<T>> unit_outputs;  // pre-pool output of each unit
    Tensor<T> features;                   // GAP vector, length C
    Tensor<T> logits;
    Tensor<T> probs;
};

// Frame tensor from 2N interleaved-by-row values (I row then Q row).
template <typename T>
Tensor<T> frame_tensor(std::span<const float> iq, std::size_t frame_length);

// Full forward pass; returns the posterior (softmax of the logits).
template <typename T>
Tensor<T> afnet_forward(const Tensor<T>& frame, const AFNetParams<T>& params, NetworkCache<T>* cache = nullptr);

// Backpropagates d(loss)/d(logits) into grads (accumulating). If grad_frame
// is non-null it receives d(loss)/d(frame).
template <typename T>
void afnet_backward(const AFNetParams<T>& params, const NetworkCache<T>& cache, const Tensor<T>& grad_logits,
                    AFNetParams<T>& grads, Tensor<T>* grad_frame = nullptr);

// Smallest distance of any relu input from 0 or any max-pool pair from a
// tie. Finite-difference checks resample points where this is tiny.
template <typename T>
double kink_margin(const NetworkCache<T>& cache);

std::size_t argmax(std::span<const float> probs);
std::size_t argmax(std::span<const double> probs);

// "AFN1", u16 version, ModelConfig as u32 fields, then every block of
// blocks() in order as little-endian float32.
void save_checkpoint(const std::filesystem::path& path, const AFNetParams<float>& params);
AFNetParams<float> load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_bytes(const AFNetParams<float>& params);
AFNetParams<float> checkpoint_from_bytes(const std::string& bytes, const std::string& context = "checkpoint");

}  // namespace amc

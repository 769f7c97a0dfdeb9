#include "amc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <type_traits>

namespace amc {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid argument";
        case ErrorKind::ShapeMismatch: return "shape mismatch";
        case ErrorKind::Io: return "i/o error";
        case ErrorKind::BadMagic: return "bad magic";
        case ErrorKind::VersionMismatch: return "version mismatch";
        case ErrorKind::Truncated: return "truncated file";
        case ErrorKind::NonFinite: return "non-finite value";
        case ErrorKind::Config: return "config error";
    }
    return "unknown";
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

template <typename T>
bool all_finite(std::span<const T> values) {
    return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

namespace {

struct AxisGeometry {
    std::size_t out = 0;
    std::size_t pad_lo = 0;
};

AxisGeometry axis_geometry(std::size_t in, std::size_t k, std::size_t dilation, Padding pad, const char* axis) {
    const std::size_t span = (k - 1) * dilation;
    if (pad == Padding::Same) return {in, span / 2};
    if (span >= in) {
        throw Error(ErrorKind::ShapeMismatch, std::string("kernel span ") + std::to_string(span + 1) +
                                                  " does not fit input " + axis + " of " + std::to_string(in));
    }
    return {in - span, 0};
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
    if (s.size() != rank) {
        throw Error(ErrorKind::ShapeMismatch,
                    std::string(what) + " must have rank " + std::to_string(rank) + ", got " + shape_str(s));
    }
}

// out[0..n) += sum_{i<m} coeff[i * coeff_stride] * rows[i * row_stride + 0..n)
// With N > 0 the width is a compile-time constant and the accumulator stays in
// registers across the whole reduction.
template <std::size_t N, typename T>
inline void axpy_rows(T* __restrict out, std::size_t n, const T* __restrict coeff, std::size_t coeff_stride,
                      std::size_t m, const T* __restrict rows, std::size_t row_stride) {
    if constexpr (N > 0) {
        T acc[N];
        for (std::size_t j = 0; j < N; ++j) acc[j] = out[j];
        for (std::size_t i = 0; i < m; ++i) {
            const T c = coeff[i * coeff_stride];
            const T* r = rows + i * row_stride;
            for (std::size_t j = 0; j < N; ++j) acc[j] += c * r[j];
        }
        for (std::size_t j = 0; j < N; ++j) out[j] = acc[j];
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            const T c = coeff[i * coeff_stride];
            const T* r = rows + i * row_stride;
            for (std::size_t j = 0; j < n; ++j) out[j] += c * r[j];
        }
    }
}

template <typename F>
void with_width(std::size_t n, F&& f) {
    switch (n) {
        case 1: f(std::integral_constant<std::size_t, 1>{}); break;
        case 4: f(std::integral_constant<std::size_t, 4>{}); break;
        case 8: f(std::integral_constant<std::size_t, 8>{}); break;
        case 12: f(std::integral_constant<std::size_t, 12>{}); break;
        case 16: f(std::integral_constant<std::size_t, 16>{}); break;
        case 24: f(std::integral_constant<std::size_t, 24>{}); break;
        case 32: f(std::integral_constant<std::size_t, 32>{}); break;
        case 48: f(std::integral_constant<std::size_t, 48>{}); break;
        default: f(std::integral_constant<std::size_t, 0>{}); break;
    }
}

}  // namespace

Shape conv2d_output_shape(const Shape& input, const Shape& kernels, const Conv2dSpec& spec) {
    require_rank(input, 3, "conv2d input");
    require_rank(kernels, 4, "conv2d kernels");
    if (spec.groups == 0 || spec.dilation_h == 0 || spec.dilation_w == 0) {
        throw Error(ErrorKind::InvalidArgument, "conv2d groups and dilation must be positive");
    }
    const std::size_t cin = input[2];
    const std::size_t cout = kernels[3];
    if (cin % spec.groups != 0 || cout % spec.groups != 0) {
        throw Error(ErrorKind::InvalidArgument, "conv2d groups=" + std::to_string(spec.groups) +
                                                    " must divide Cin=" + std::to_string(cin) +
                                                    " and Cout=" + std::to_string(cout));
    }
    if (kernels[2] != cin / spec.groups) {
        throw Error(ErrorKind::ShapeMismatch, "conv2d kernels " + shape_str(kernels) + " expect " +
                                                  std::to_string(kernels[2]) + " input channels per group, input " +
                                                  shape_str(input) + " provides " + std::to_string(cin / spec.groups));
    }
    const auto gh = axis_geometry(input[0], kernels[0], spec.dilation_h, spec.pad_h, "height");
    const auto gw = axis_geometry(input[1], kernels[1], spec.dilation_w, spec.pad_w, "width");
    return {gh.out, gw.out, cout};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Conv2dSpec& spec, const Tensor<T>* bias) {
    Tensor<T> out(conv2d_output_shape(input.shape(), kernels.shape(), spec));
    const std::size_t H = input.dim(0), W = input.dim(1), cin = input.dim(2);
    const std::size_t KH = kernels.dim(0), KW = kernels.dim(1), cout = kernels.dim(3);
    const std::size_t cig = cin / spec.groups, cog = cout / spec.groups;
    const std::size_t OH = out.dim(0), OW = out.dim(1);
    const auto pad_h = axis_geometry(H, KH, spec.dilation_h, spec.pad_h, "height").pad_lo;
    const auto pad_w = axis_geometry(W, KW, spec.dilation_w, spec.pad_w, "width").pad_lo;
    if (bias && bias->size() != cout) {
        throw Error(ErrorKind::ShapeMismatch, "conv2d bias " + shape_str(bias->shape()) + " vs Cout " +
                                                  std::to_string(cout));
    }

    const T* in = input.data();
    const T* k = kernels.data();
    for (std::size_t oh = 0; oh < OH; ++oh) {
        for (std::size_t ow = 0; ow < OW; ++ow) {
            T* o = out.data() + (oh * OW + ow) * cout;
            if (bias) std::copy(bias->data(), bias->data() + cout, o);
            for (std::size_t kh = 0; kh < KH; ++kh) {
                const std::ptrdiff_t ih = std::ptrdiff_t(oh + kh * spec.dilation_h) - std::ptrdiff_t(pad_h);
                if (ih < 0 || ih >= std::ptrdiff_t(H)) continue;
                for (std::size_t kw = 0; kw < KW; ++kw) {
                    const std::ptrdiff_t iw = std::ptrdiff_t(ow + kw * spec.dilation_w) - std::ptrdiff_t(pad_w);
                    if (iw < 0 || iw >= std::ptrdiff_t(W)) continue;
                    const T* x = in + (std::size_t(ih) * W + std::size_t(iw)) * cin;
                    const T* kbase = k + (kh * KW + kw) * cig * cout;
                    with_width(cog, [&](auto width) {
                        for (std::size_t g = 0; g < spec.groups; ++g) {
                            axpy_rows<width()>(o + g * cog, cog, x + g * cig, 1, cig, kbase + g * cog, cout);
                        }
                    });
                }
            }
        }
    }
    return out;
}

template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels, const Conv2dSpec& spec,
                     const Tensor<T>& grad_out, Tensor<T>* grad_input, Tensor<T>* grad_kernels,
                     Tensor<T>* grad_bias) {
    const Shape out_shape = conv2d_output_shape(input.shape(), kernels.shape(), spec);
    if (grad_out.shape() != out_shape) {
        throw Error(ErrorKind::ShapeMismatch, "conv2d grad_out " + shape_str(grad_out.shape()) + " vs " +
                                                  shape_str(out_shape));
    }
    const std::size_t H = input.dim(0), W = input.dim(1), cin = input.dim(2);
    const std::size_t KH = kernels.dim(0), KW = kernels.dim(1), cout = kernels.dim(3);
    const std::size_t cig = cin / spec.groups, cog = cout / spec.groups;
    const std::size_t OH = out_shape[0], OW = out_shape[1];
    const auto pad_h = axis_geometry(H, KH, spec.dilation_h, spec.pad_h, "height").pad_lo;
    const auto pad_w = axis_geometry(W, KW, spec.dilation_w, spec.pad_w, "width").pad_lo;

    // Transposed kernels (kh, kw, Cout, Cin/g) keep the input-gradient inner
    // loop contiguous.
    std::vector<T> kt;
    if (grad_input) {
        kt.resize(kernels.size());
        for (std::size_t tap = 0; tap < KH * KW; ++tap) {
            for (std::size_t ci = 0; ci < cig; ++ci) {
                for (std::size_t co = 0; co < cout; ++co) {
                    kt[(tap * cout + co) * cig + ci] = kernels[(tap * cig + ci) * cout + co];
                }
            }
        }
    }

    const T* in = input.data();
    const T* gout = grad_out.data();
    if (grad_bias) {
        for (std::size_t p = 0; p < OH * OW; ++p) {
            for (std::size_t co = 0; co < cout; ++co) (*grad_bias)[co] += gout[p * cout + co];
        }
    }

    for (std::size_t kh = 0; kh < KH; ++kh) {
        for (std::size_t kw = 0; kw < KW; ++kw) {
            const std::size_t tap = kh * KW + kw;
            // output columns whose input column for this tap is in range
            const std::ptrdiff_t shift_w = std::ptrdiff_t(kw * spec.dilation_w) - std::ptrdiff_t(pad_w);
            const std::ptrdiff_t ow_lo = std::max<std::ptrdiff_t>(0, -shift_w);
            const std::ptrdiff_t ow_hi = std::min<std::ptrdiff_t>(std::ptrdiff_t(OW), std::ptrdiff_t(W) - shift_w);
            if (ow_hi <= ow_lo) continue;
            const std::size_t cols = std::size_t(ow_hi - ow_lo);
            for (std::size_t oh = 0; oh < OH; ++oh) {
                const std::ptrdiff_t ih = std::ptrdiff_t(oh + kh * spec.dilation_h) - std::ptrdiff_t(pad_h);
                if (ih < 0 || ih >= std::ptrdiff_t(H)) continue;
                const std::size_t in_base = (std::size_t(ih) * W + std::size_t(ow_lo + shift_w)) * cin;
                const std::size_t out_base = (oh * OW + std::size_t(ow_lo)) * cout;
                if (grad_kernels) {
                    with_width(cog, [&](auto width) {
                        for (std::size_t g = 0; g < spec.groups; ++g) {
                            for (std::size_t ci = 0; ci < cig; ++ci) {
                                T* dk = grad_kernels->data() + (tap * cig + ci) * cout + g * cog;
                                axpy_rows<width()>(dk, cog, in + in_base + g * cig + ci, cin, cols,
                                                   gout + out_base + g * cog, cout);
                            }
                        }
                    });
                }
                if (grad_input) {
                    with_width(cig, [&](auto width) {
                        for (std::size_t c = 0; c < cols; ++c) {
                            T* dx = grad_input->data() + in_base + c * cin;
                            const T* go = gout + out_base + c * cout;
                            for (std::size_t g = 0; g < spec.groups; ++g) {
                                axpy_rows<width()>(dx + g * cig, cig, go + g * cog, 1, cog,
                                                   kt.data() + (tap * cout + g * cog) * cig, cig);
                            }
                        }
                    });
                }
            }
        }
    }
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input) {
    require_rank(input.shape(), 3, "maxpool2d input");
    const std::size_t H = input.dim(0), W = input.dim(1), C = input.dim(2);
    if (W % 2 != 0) {
        throw Error(ErrorKind::ShapeMismatch, "maxpool2d needs an even width, got " + std::to_string(W) +
                                                  "; choose a frame length divisible by 4");
    }
    Tensor<T> out({H, W / 2, C});
    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t w = 0; w < W / 2; ++w) {
            for (std::size_t c = 0; c < C; ++c) {
                out.at(h, w, c) = std::max(input.at(h, 2 * w, c), input.at(h, 2 * w + 1, c));
            }
        }
    }
    return out;
}

template <typename T>
void maxpool2d_backward(const Tensor<T>& input, const Tensor<T>& grad_out, Tensor<T>& grad_input) {
    const std::size_t H = input.dim(0), W = input.dim(1), C = input.dim(2);
    if (grad_out.shape() != Shape{H, W / 2, C} || grad_input.shape() != input.shape()) {
        throw Error(ErrorKind::ShapeMismatch, "maxpool2d_backward shapes disagree");
    }
    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t w = 0; w < W / 2; ++w) {
            for (std::size_t c = 0; c < C; ++c) {
                const bool first = input.at(h, 2 * w, c) >= input.at(h, 2 * w + 1, c);
                grad_input.at(h, 2 * w + (first ? 0 : 1), c) += grad_out.at(h, w, c);
            }
        }
    }
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
    require_rank(input.shape(), 3, "global_avg_pool input");
    const std::size_t HW = input.dim(0) * input.dim(1), C = input.dim(2);
    Tensor<T> out({C});
    for (std::size_t p = 0; p < HW; ++p) {
        const T* x = input.data() + p * C;
        for (std::size_t c = 0; c < C; ++c) out[c] += x[c];
    }
    const T inv = T(1) / T(HW);
    for (std::size_t c = 0; c < C; ++c) out[c] *= inv;
    return out;
}

template <typename T>
void global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out, Tensor<T>& grad_input) {
    const std::size_t HW = input_shape.at(0) * input_shape.at(1), C = input_shape.at(2);
    if (grad_out.size() != C || grad_input.shape() != input_shape) {
        throw Error(ErrorKind::ShapeMismatch, "global_avg_pool_backward shapes disagree");
    }
    const T inv = T(1) / T(HW);
    for (std::size_t p = 0; p < HW; ++p) {
        T* dx = grad_input.data() + p * C;
        for (std::size_t c = 0; c < C; ++c) dx[c] += grad_out[c] * inv;
    }
}

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias) {
    require_rank(weights.shape(), 2, "dense weights");
    const std::size_t cin = weights.dim(0), cout = weights.dim(1);
    if (input.size() != cin) {
        throw Error(ErrorKind::ShapeMismatch, "dense input length " + std::to_string(input.size()) +
                                                  " vs weights " + shape_str(weights.shape()));
    }
    if (bias && bias->size() != cout) {
        throw Error(ErrorKind::ShapeMismatch, "dense bias " + shape_str(bias->shape()) + " vs weights " +
                                                  shape_str(weights.shape()));
    }
    Tensor<T> out({cout});
    if (bias) std::copy(bias->data(), bias->data() + cout, out.data());
    for (std::size_t i = 0; i < cin; ++i) {
        const T xv = input[i];
        const T* row = weights.data() + i * cout;
        for (std::size_t j = 0; j < cout; ++j) out[j] += xv * row[j];
    }
    return out;
}

template <typename T>
void dense_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out,
                    Tensor<T>* grad_input, Tensor<T>* grad_weights, Tensor<T>* grad_bias) {
    const std::size_t cin = weights.dim(0), cout = weights.dim(1);
    if (grad_out.size() != cout || input.size() != cin) {
        throw Error(ErrorKind::ShapeMismatch, "dense_backward shapes disagree");
    }
    for (std::size_t i = 0; i < cin; ++i) {
        const T* row = weights.data() + i * cout;
        if (grad_input) {
            T acc = 0;
            for (std::size_t j = 0; j < cout; ++j) acc += row[j] * grad_out[j];
            (*grad_input)[i] += acc;
        }
        if (grad_weights) {
            T* drow = grad_weights->data() + i * cout;
            const T xv = input[i];
            for (std::size_t j = 0; j < cout; ++j) drow[j] += xv * grad_out[j];
        }
    }
    if (grad_bias) {
        for (std::size_t j = 0; j < cout; ++j) (*grad_bias)[j] += grad_out[j];
    }
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out = input;
    for (auto& v : out.values()) v = v > T(0) ? v : T(0);
    return out;
}

template <typename T>
void relu_backward(const Tensor<T>& pre_activation, const Tensor<T>& grad_out, Tensor<T>& grad_input) {
    if (pre_activation.shape() != grad_out.shape() || grad_input.shape() != grad_out.shape()) {
        throw Error(ErrorKind::ShapeMismatch, "relu_backward shapes disagree");
    }
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
        if (pre_activation[i] > T(0)) grad_input[i] += grad_out[i];
    }
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    Tensor<T> out = logits;
    const T peak = *std::max_element(out.values().begin(), out.values().end());
    T total = 0;
    for (auto& v : out.values()) {
        v = std::exp(v - peak);
        total += v;
    }
    for (auto& v : out.values()) v /= total;
    return out;
}

template <typename T>
void adam_step(std::span<const ParamBlock<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state,
               double learning_rate) {
    if (params.size() != grads.size()) {
        throw Error(ErrorKind::ShapeMismatch, "adam_step: " + std::to_string(params.size()) + " parameter blocks but " +
                                                  std::to_string(grads.size()) + " gradient blocks");
    }
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].value->shape() != grads[b].shape()) {
            throw Error(ErrorKind::ShapeMismatch, "adam_step: gradient shape " + shape_str(grads[b].shape()) +
                                                      " does not mirror parameter '" + params[b].name + "' " +
                                                      shape_str(params[b].value->shape()));
        }
        if (!all_finite(grads[b].values())) {
            throw Error(ErrorKind::NonFinite, "adam_step: non-finite gradient in parameter block '" + params[b].name + "'");
        }
    }
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.value->shape());
            state.second_moment.emplace_back(p.value->shape());
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw Error(ErrorKind::ShapeMismatch, "adam_step: optimizer state tracks a different parameter set");
    }

    state.step += 1;
    const double t = double(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    const T b1 = T(state.beta1), b2 = T(state.beta2);
    const T step_size = T(learning_rate / bc1);
    const T inv_sqrt_bc2 = T(1.0 / std::sqrt(bc2));
    const T eps = T(state.epsilon);

    for (std::size_t b = 0; b < params.size(); ++b) {
        T* p = params[b].value->data();
        const T* g = grads[b].data();
        T* m = state.first_moment[b].data();
        T* v = state.second_moment[b].data();
        for (std::size_t i = 0; i < grads[b].size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
        }
    }
}

#define AMC_INSTANTIATE_OPS(T)                                                                                   \
    template bool all_finite<T>(std::span<const T>);                                                             \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Conv2dSpec&, const Tensor<T>*);       \
    template void conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Conv2dSpec&, const Tensor<T>&,    \
                                     Tensor<T>*, Tensor<T>*, Tensor<T>*);                                        \
    template Tensor<T> maxpool2d<T>(const Tensor<T>&);                                                           \
    template void maxpool2d_backward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                         \
    template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                                     \
    template void global_avg_pool_backward<T>(const Shape&, const Tensor<T>&, Tensor<T>&);                       \
    template Tensor<T> dense<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);                           \
    template void dense_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,            \
                                    Tensor<T>*, Tensor<T>*);                                                     \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                                \
    template void relu_backward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                              \
    template Tensor<T> softmax<T>(const Tensor<T>&);                                                             \
    template void adam_step<T>(std::span<const ParamBlock<T>>, std::span<const Tensor<T>>, AdamState<T>&, double);

AMC_INSTANTIATE_OPS(float)
AMC_INSTANTIATE_OPS(double)

}  // namespace amc

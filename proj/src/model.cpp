#include "amc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "binary_io.hpp"

namespace amc {

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, "model config: " + msg); };
    if (channels == 0 || compression == 0) fail("channels and compression must be positive");
    if (channels % compression != 0) {
        fail("compression r=" + std::to_string(compression) + " must divide channels C=" + std::to_string(channels));
    }
    if (groups == 0 || channels % groups != 0) {
        fail("groups g=" + std::to_string(groups) + " must divide channels C=" + std::to_string(channels));
    }
    if (units == 0) fail("at least one AF unit is required");
    if (classes < 2) fail("at least two classes are required");
    std::size_t prev = 0;
    for (auto p : pool_after) {
        if (p <= prev || p > units) fail("pool_after must be increasing unit indices in 1..units");
        prev = p;
    }
    const std::size_t factor = std::size_t{1} << pool_after.size();
    if (frame_length == 0 || frame_length % factor != 0) {
        fail("frame length " + std::to_string(frame_length) + " must be divisible by " + std::to_string(factor) +
             " for " + std::to_string(pool_after.size()) + " max-pool layers");
    }
}

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.channels = 8;
    c.compression = 4;
    c.units = 2;
    c.pool_after = {1, 2};
    c.groups = 2;
    c.classes = 11;
    c.frame_length = 16;
    return c;
}

std::size_t count_fusion_params(std::size_t channels, std::size_t compression) {
    if (compression == 0 || channels % compression != 0) {
        throw Error(ErrorKind::InvalidArgument, "count_fusion_params: r=" + std::to_string(compression) +
                                                    " does not divide C=" + std::to_string(channels));
    }
    return 3 * channels * channels / compression;
}

template <typename T>
std::vector<ParamBlock<T>> AFNetParams<T>::blocks() {
    std::vector<ParamBlock<T>> out;
    out.push_back({"conv1.kernels", &conv1_kernels});
    out.push_back({"conv1.bias", &conv1_bias});
    for (std::size_t i = 0; i < units.size(); ++i) {
        const std::string p = "unit" + std::to_string(i + 1) + ".";
        auto& u = units[i];
        out.push_back({p + "small", &u.small_kernels});
        out.push_back({p + "large", &u.large_kernels});
        out.push_back({p + "fusion1.squeeze", &u.branch_fusion.squeeze});
        out.push_back({p + "fusion1.a", &u.branch_fusion.to_a});
        out.push_back({p + "fusion1.b", &u.branch_fusion.to_b});
        out.push_back({p + "fusion2.squeeze", &u.skip_fusion.squeeze});
        out.push_back({p + "fusion2.a", &u.skip_fusion.to_a});
        out.push_back({p + "fusion2.b", &u.skip_fusion.to_b});
    }
    out.push_back({"head.weights", &head_weights});
    out.push_back({"head.bias", &head_bias});
    return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> AFNetParams<T>::blocks() const {
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    for (auto& b : const_cast<AFNetParams*>(this)->blocks()) out.emplace_back(std::move(b.name), b.value);
    return out;
}

template <typename T>
std::size_t AFNetParams<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : blocks()) n += t->size();
    return n;
}

template <typename T>
AFNetParams<T> AFNetParams<T>::zeros_like() const {
    AFNetParams out = *this;
    for (auto& b : out.blocks()) b.value->fill(T(0));
    return out;
}

template <typename T>
template <typename U>
AFNetParams<U> AFNetParams<T>::cast() const {
    AFNetParams<U> out;
    out.config = config;
    out.units.resize(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) {
        out.units[i].branch_fusion.lambda = units[i].branch_fusion.lambda;
        out.units[i].skip_fusion.lambda = units[i].skip_fusion.lambda;
    }
    auto dst = out.blocks();
    const auto src = blocks();
    for (std::size_t b = 0; b < src.size(); ++b) *dst[b].value = src[b].second->template cast<U>();
    return out;
}

namespace {

template <typename T>
Tensor<T> he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / double(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = T(dist(rng));
    return t;
}

template <typename T>
FusionParams<T> init_fusion(const ModelConfig& c, double lambda, std::mt19937_64& rng) {
    const std::size_t C = c.channels, d = c.squeeze_dim();
    FusionParams<T> f;
    f.squeeze = he_uniform<T>({C, d}, C, rng);
    f.to_a = he_uniform<T>({d, C}, d, rng);
    f.to_b = he_uniform<T>({d, C}, d, rng);
    f.lambda = lambda;
    return f;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw Error(ErrorKind::ShapeMismatch,
                    std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

bool pools_after(const ModelConfig& c, std::size_t unit_index) {
    return std::find(c.pool_after.begin(), c.pool_after.end(), unit_index + 1) != c.pool_after.end();
}

}  // namespace

template <typename T>
AFNetParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const std::size_t C = config.channels;
    const std::size_t cg = C / config.groups;
    const std::size_t kw = ModelConfig::kBranchKernelWidth;
    AFNetParams<T> p;
    p.config = config;
    p.conv1_kernels = he_uniform<T>({ModelConfig::kFirstKernelHeight, ModelConfig::kFirstKernelWidth, 1, C},
                                    ModelConfig::kFirstKernelHeight * ModelConfig::kFirstKernelWidth, rng);
    p.conv1_bias = Tensor<T>({C});
    for (std::size_t i = 0; i < config.units; ++i) {
        AFUnitParams<T> u;
        u.small_kernels = he_uniform<T>({1, kw, cg, C}, kw * cg, rng);
        u.large_kernels = he_uniform<T>({1, kw, cg, C}, kw * cg, rng);
        u.branch_fusion = init_fusion<T>(config, 1.0, rng);
        u.skip_fusion = init_fusion<T>(config, 2.0, rng);
        p.units.push_back(std::move(u));
    }
    p.head_weights = he_uniform<T>({C, config.classes}, C, rng);
    p.head_bias = Tensor<T>({config.classes});
    return p;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> lambda_softmax(const Tensor<T>& a, const Tensor<T>& b, double lambda) {
    require_same_shape(a, b, "lambda_softmax");
    if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda_softmax: lambda must be positive");
    Tensor<T> alpha(a.shape()), beta(a.shape());
    const T lam = T(lambda);
    for (std::size_t c = 0; c < a.size(); ++c) {
        // shift by the larger logit so the exponent is <= 0
        const T lo = std::min(a[c], b[c]) - std::max(a[c], b[c]);
        const T e = std::exp(lo);
        const T big = lam / (T(1) + e);
        const T small = lam * e / (T(1) + e);
        if (a[c] >= b[c]) {
            alpha[c] = big;
            beta[c] = small;
        } else {
            alpha[c] = small;
            beta[c] = big;
        }
    }
    return {std::move(alpha), std::move(beta)};
}

template <typename T>
Tensor<T> fusion_forward(const Tensor<T>& A, const Tensor<T>& B, const FusionParams<T>& params, FusionCache<T>* cache) {
    require_same_shape(A, B, "fusion_forward");
    if (A.rank() != 3 || A.dim(2) != params.squeeze.dim(0)) {
        throw Error(ErrorKind::ShapeMismatch, "fusion_forward: feature map " + shape_str(A.shape()) +
                                                  " vs squeeze map " + shape_str(params.squeeze.shape()));
    }
    const std::size_t C = A.dim(2), HW = A.dim(0) * A.dim(1);

    Tensor<T> pooled({C});
    for (std::size_t p = 0; p < HW; ++p) {
        for (std::size_t c = 0; c < C; ++c) pooled[c] += A[p * C + c] + B[p * C + c];
    }
    const T inv = T(1) / T(HW);
    for (auto& v : pooled.values()) v *= inv;

    Tensor<T> squeeze_pre = dense(pooled, params.squeeze);
    Tensor<T> squeezed = relu(squeeze_pre);
    auto [alpha, beta] = lambda_softmax(dense(squeezed, params.to_a), dense(squeezed, params.to_b), params.lambda);

    Tensor<T> out(A.shape());
    for (std::size_t p = 0; p < HW; ++p) {
        const T* a = A.data() + p * C;
        const T* b = B.data() + p * C;
        T* o = out.data() + p * C;
        for (std::size_t c = 0; c < C; ++c) o[c] = alpha[c] * a[c] + beta[c] * b[c];
    }
    if (cache) {
        cache->pooled = std::move(pooled);
        cache->squeeze_pre = std::move(squeeze_pre);
        cache->squeezed = std::move(squeezed);
        cache->alpha = std::move(alpha);
        cache->beta = std::move(beta);
    }
    return out;
}

template <typename T>
void fusion_backward(const Tensor<T>& A, const Tensor<T>& B, const FusionParams<T>& params, const FusionCache<T>& cache,
                     const Tensor<T>& grad_out, Tensor<T>& grad_A, Tensor<T>& grad_B, FusionParams<T>& grad_params) {
    require_same_shape(A, grad_out, "fusion_backward");
    const std::size_t C = A.dim(2), HW = A.dim(0) * A.dim(1);
    Tensor<T> d_alpha({C}), d_beta({C});
    for (std::size_t p = 0; p < HW; ++p) {
        const T* g = grad_out.data() + p * C;
        const T* a = A.data() + p * C;
        const T* b = B.data() + p * C;
        T* ga = grad_A.data() + p * C;
        T* gb = grad_B.data() + p * C;
        for (std::size_t c = 0; c < C; ++c) {
            d_alpha[c] += g[c] * a[c];
            d_beta[c] += g[c] * b[c];
            ga[c] += cache.alpha[c] * g[c];
            gb[c] += cache.beta[c] * g[c];
        }
    }

    // alpha = lambda * sigmoid(a - b): d alpha / d(a - b) = alpha * beta / lambda
    const T inv_lambda = T(1.0 / params.lambda);
    Tensor<T> d_a({C}), d_b({C});
    for (std::size_t c = 0; c < C; ++c) {
        const T d = (d_alpha[c] - d_beta[c]) * cache.alpha[c] * cache.beta[c] * inv_lambda;
        d_a[c] = d;
        d_b[c] = -d;
    }
    Tensor<T> d_squeezed(cache.squeezed.shape());
    dense_backward(cache.squeezed, params.to_a, d_a, &d_squeezed, &grad_params.to_a);
    dense_backward(cache.squeezed, params.to_b, d_b, &d_squeezed, &grad_params.to_b);
    Tensor<T> d_squeeze_pre(cache.squeeze_pre.shape());
    relu_backward(cache.squeeze_pre, d_squeezed, d_squeeze_pre);
    Tensor<T> d_pooled({C});
    dense_backward(cache.pooled, params.squeeze, d_squeeze_pre, &d_pooled, &grad_params.squeeze);

    const T inv = T(1) / T(HW);
    for (std::size_t p = 0; p < HW; ++p) {
        T* ga = grad_A.data() + p * C;
        T* gb = grad_B.data() + p * C;
        for (std::size_t c = 0; c < C; ++c) {
            const T g = d_pooled[c] * inv;
            ga[c] += g;
            gb[c] += g;
        }
    }
}

Conv2dSpec small_branch_spec(const ModelConfig& config) {
    Conv2dSpec s;
    s.groups = config.groups;
    return s;
}

Conv2dSpec large_branch_spec(const ModelConfig& config) {
    Conv2dSpec s;
    s.groups = config.groups;
    s.dilation_w = ModelConfig::kLargeBranchDilation;
    return s;
}

Conv2dSpec first_conv_spec() {
    Conv2dSpec s;
    s.pad_h = Padding::Valid;
    s.pad_w = Padding::Same;
    return s;
}

template <typename T>
Tensor<T> af_unit_forward(const Tensor<T>& input, const AFUnitParams<T>& params, const ModelConfig& config,
                          AFUnitCache<T>* cache) {
    if (input.rank() != 3 || input.dim(2) != config.channels) {
        throw Error(ErrorKind::ShapeMismatch, "af_unit_forward: input " + shape_str(input.shape()) + " needs " +
                                                  std::to_string(config.channels) + " channels");
    }
    Tensor<T> small_pre = conv2d(input, params.small_kernels, small_branch_spec(config));
    Tensor<T> large_pre = conv2d(input, params.large_kernels, large_branch_spec(config));
    Tensor<T> small = relu(small_pre);
    Tensor<T> large = relu(large_pre);
    FusionCache<T>* branch_cache = cache ? &cache->branch : nullptr;
    FusionCache<T>* skip_cache = cache ? &cache->skip : nullptr;
    Tensor<T> fused = fusion_forward(small, large, params.branch_fusion, branch_cache);
    Tensor<T> out = fusion_forward(input, fused, params.skip_fusion, skip_cache);
    if (cache) {
        cache->input = input;
        cache->small_pre = std::move(small_pre);
        cache->large_pre = std::move(large_pre);
        cache->small = std::move(small);
        cache->large = std::move(large);
        cache->fused = std::move(fused);
    }
    return out;
}

template <typename T>
void af_unit_backward(const AFUnitParams<T>& params, const ModelConfig& config, const AFUnitCache<T>& cache,
                      const Tensor<T>& grad_out, Tensor<T>& grad_input, AFUnitParams<T>& grad_params) {
    Tensor<T> d_fused(cache.fused.shape());
    fusion_backward(cache.input, cache.fused, params.skip_fusion, cache.skip, grad_out, grad_input, d_fused,
                    grad_params.skip_fusion);

    Tensor<T> d_small(cache.small.shape()), d_large(cache.large.shape());
    fusion_backward(cache.small, cache.large, params.branch_fusion, cache.branch, d_fused, d_small, d_large,
                    grad_params.branch_fusion);

    Tensor<T> d_small_pre(cache.small_pre.shape()), d_large_pre(cache.large_pre.shape());
    relu_backward(cache.small_pre, d_small, d_small_pre);
    relu_backward(cache.large_pre, d_large, d_large_pre);
    conv2d_backward(cache.input, params.small_kernels, small_branch_spec(config), d_small_pre, &grad_input,
                    &grad_params.small_kernels);
    conv2d_backward(cache.input, params.large_kernels, large_branch_spec(config), d_large_pre, &grad_input,
                    &grad_params.large_kernels);
}

template <typename T>
Tensor<T> frame_tensor(std::span<const float> iq, std::size_t frame_length) {
    if (iq.size() != 2 * frame_length) {
        throw Error(ErrorKind::ShapeMismatch, "frame holds " + std::to_string(iq.size() / 2) +
                                                  " samples, model expects frame length " + std::to_string(frame_length));
    }
    Tensor<T> t({2, frame_length, 1});
    for (std::size_t i = 0; i < iq.size(); ++i) t[i] = T(iq[i]);
    return t;
}

template <typename T>
Tensor<T> afnet_forward(const Tensor<T>& frame, const AFNetParams<T>& params, NetworkCache<T>* cache) {
    const auto& cfg = params.config;
    if (frame.shape() != Shape{2, cfg.frame_length, 1}) {
        throw Error(ErrorKind::ShapeMismatch, "afnet_forward: frame " + shape_str(frame.shape()) + ", expected (2x" +
                                                  std::to_string(cfg.frame_length) + "x1)");
    }
    Tensor<T> conv1_pre = conv2d(frame, params.conv1_kernels, first_conv_spec(), &params.conv1_bias);
    Tensor<T> x = relu(conv1_pre);
    if (cache) {
        cache->frame = frame;
        cache->units.assign(params.units.size(), {});
        cache->unit_outputs.assign(params.units.size(), {});
    }
    for (std::size_t i = 0; i < params.units.size(); ++i) {
        Tensor<T> y = af_unit_forward(x, params.units[i], cfg, cache ? &cache->units[i] : nullptr);
        x = pools_after(cfg, i) ? maxpool2d(y) : y;
        if (cache) cache->unit_outputs[i] = std::move(y);
    }
    Tensor<T> features = global_avg_pool(x);
    Tensor<T> logits = dense(features, params.head_weights, &params.head_bias);
    Tensor<T> probs = softmax(logits);
    if (cache) {
        cache->conv1_pre = std::move(conv1_pre);
        cache->features = std::move(features);
        cache->logits = std::move(logits);
        cache->probs = probs;
    }
    return probs;
}

template <typename T>
void afnet_backward(const AFNetParams<T>& params, const NetworkCache<T>& cache, const Tensor<T>& grad_logits,
                    AFNetParams<T>& grads, Tensor<T>* grad_frame) {
    const auto& cfg = params.config;
    Tensor<T> d_features(cache.features.shape());
    dense_backward(cache.features, params.head_weights, grad_logits, &d_features, &grads.head_weights, &grads.head_bias);

    const std::size_t last = params.units.size() - 1;
    Shape tail_shape = cache.unit_outputs[last].shape();
    if (pools_after(cfg, last)) tail_shape[1] /= 2;
    Tensor<T> dx(tail_shape);
    global_avg_pool_backward(tail_shape, d_features, dx);

    for (std::size_t i = params.units.size(); i-- > 0;) {
        Tensor<T> d_out;
        if (pools_after(cfg, i)) {
            d_out = Tensor<T>(cache.unit_outputs[i].shape());
            maxpool2d_backward(cache.unit_outputs[i], dx, d_out);
        } else {
            d_out = std::move(dx);
        }
        Tensor<T> d_in(cache.units[i].input.shape());
        af_unit_backward(params.units[i], cfg, cache.units[i], d_out, d_in, grads.units[i]);
        dx = std::move(d_in);
    }

    Tensor<T> d_pre(cache.conv1_pre.shape());
    relu_backward(cache.conv1_pre, dx, d_pre);
    conv2d_backward(cache.frame, params.conv1_kernels, first_conv_spec(), d_pre, grad_frame, &grads.conv1_kernels,
                    &grads.conv1_bias);
}

template <typename T>
double kink_margin(const NetworkCache<T>& cache) {
    double m = std::numeric_limits<double>::infinity();
    auto relu_inputs = [&](const Tensor<T>& t) {
        for (T v : t.values()) m = std::min(m, double(std::abs(v)));
    };
    relu_inputs(cache.conv1_pre);
    for (const auto& u : cache.units) {
        relu_inputs(u.small_pre);
        relu_inputs(u.large_pre);
        relu_inputs(u.branch.squeeze_pre);
        relu_inputs(u.skip.squeeze_pre);
    }
    // every even-width unit output is scanned, pooled or not
    for (const auto& y : cache.unit_outputs) {
        if (y.dim(1) % 2 != 0) continue;
        for (std::size_t h = 0; h < y.dim(0); ++h)
            for (std::size_t w = 0; w + 1 < y.dim(1); w += 2)
                for (std::size_t c = 0; c < y.dim(2); ++c) m = std::min(m, double(std::abs(y.at(h, w, c) - y.at(h, w + 1, c))));
    }
    return m;
}

std::size_t argmax(std::span<const float> probs) {
    return std::size_t(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::size_t argmax(std::span<const double> probs) {
    return std::size_t(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

AFNetParams<float> params_shell(const ModelConfig& config) {
    // allocation only; values are overwritten by the loader
    return init_params<float>(config, 0);
}

}  // namespace

std::string checkpoint_bytes(const AFNetParams<float>& params) {
    std::ostringstream os(std::ios::binary);
    os.write("AFN1", 4);
    detail::write_le<std::uint16_t>(os, kCheckpointVersion);
    const auto& c = params.config;
    for (std::size_t v : {c.channels, c.compression, c.units, c.groups, c.classes, c.frame_length, c.pool_after.size()}) {
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(v));
    }
    for (std::size_t p : c.pool_after) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p));
    for (const auto& [name, t] : params.blocks()) {
        for (float v : t->values()) detail::write_le<float>(os, v);
    }
    return os.str();
}

AFNetParams<float> checkpoint_from_bytes(const std::string& bytes, const std::string& context) {
    std::istringstream is(bytes, std::ios::binary);
    char magic[4] = {};
    if (!is.read(magic, 4)) throw Error(ErrorKind::Truncated, context + ": file shorter than its header");
    if (std::string_view(magic, 4) != "AFN1") throw Error(ErrorKind::BadMagic, context + ": bad magic, expected AFN1");
    const auto version = detail::read_le<std::uint16_t>(is, context);
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::VersionMismatch, context + ": checkpoint version " + std::to_string(version) +
                                                    ", this build reads version " + std::to_string(kCheckpointVersion));
    }
    ModelConfig c;
    c.channels = detail::read_le<std::uint32_t>(is, context);
    c.compression = detail::read_le<std::uint32_t>(is, context);
    c.units = detail::read_le<std::uint32_t>(is, context);
    c.groups = detail::read_le<std::uint32_t>(is, context);
    c.classes = detail::read_le<std::uint32_t>(is, context);
    c.frame_length = detail::read_le<std::uint32_t>(is, context);
    const auto n_pools = detail::read_le<std::uint32_t>(is, context);
    if (n_pools > c.units) throw Error(ErrorKind::InvalidArgument, context + ": corrupt pool list");
    c.pool_after.resize(n_pools);
    for (auto& p : c.pool_after) p = detail::read_le<std::uint32_t>(is, context);
    c.validate();

    auto params = params_shell(c);
    for (auto& b : params.blocks()) {
        for (auto& v : b.value->values()) v = detail::read_le<float>(is, context + " block " + b.name);
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorKind::InvalidArgument, context + ": trailing bytes after the last parameter block");
    }
    return params;
}

void save_checkpoint(const std::filesystem::path& path, const AFNetParams<float>& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    const auto bytes = checkpoint_bytes(params);
    os.write(bytes.data(), std::streamsize(bytes.size()));
    if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

AFNetParams<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorKind::Io, "cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return checkpoint_from_bytes(ss.str(), "checkpoint " + path.string());
}

#define AMC_INSTANTIATE_MODEL(T)                                                                                     \
    template struct AFNetParams<T>;                                                                                  \
    template AFNetParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                                       \
    template std::pair<Tensor<T>, Tensor<T>> lambda_softmax<T>(const Tensor<T>&, const Tensor<T>&, double);          \
    template Tensor<T> fusion_forward<T>(const Tensor<T>&, const Tensor<T>&, const FusionParams<T>&, FusionCache<T>*); \
    template void fusion_backward<T>(const Tensor<T>&, const Tensor<T>&, const FusionParams<T>&,                     \
                                     const FusionCache<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&,                \
                                     FusionParams<T>&);                                                              \
    template Tensor<T> af_unit_forward<T>(const Tensor<T>&, const AFUnitParams<T>&, const ModelConfig&,              \
                                          AFUnitCache<T>*);                                                          \
    template void af_unit_backward<T>(const AFUnitParams<T>&, const ModelConfig&, const AFUnitCache<T>&,             \
                                      const Tensor<T>&, Tensor<T>&, AFUnitParams<T>&);                               \
    template Tensor<T> frame_tensor<T>(std::span<const float>, std::size_t);                                         \
    template Tensor<T> afnet_forward<T>(const Tensor<T>&, const AFNetParams<T>&, NetworkCache<T>*);                  \
    template void afnet_backward<T>(const AFNetParams<T>&, const NetworkCache<T>&, const Tensor<T>&,                 \
                                    AFNetParams<T>&, Tensor<T>*);                                                    \
    template double kink_margin<T>(const NetworkCache<T>&);

AMC_INSTANTIATE_MODEL(float)
AMC_INSTANTIATE_MODEL(double)

template AFNetParams<double> AFNetParams<float>::cast<double>() const;
template AFNetParams<float> AFNetParams<double>::cast<float>() const;
template AFNetParams<float> AFNetParams<float>::cast<float>() const;
template AFNetParams<double> AFNetParams<double>::cast<double>() const;

}  // namespace amc

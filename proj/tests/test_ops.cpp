#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "amc/gradcheck.hpp"
#include "amc/ops.hpp"
#include "test_support.hpp"

namespace amc {
namespace {

using test::random_tensor;

// Direct evaluation of the convolution sum over an explicitly zero-padded
// copy of the input.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k, const Conv2dSpec& s,
                          const Tensor<double>* bias) {
    const std::size_t H = x.dim(0), W = x.dim(1), cin = x.dim(2);
    const std::size_t KH = k.dim(0), KW = k.dim(1), cout = k.dim(3);
    const std::size_t span_h = (KH - 1) * s.dilation_h, span_w = (KW - 1) * s.dilation_w;
    const std::size_t ph = s.pad_h == Padding::Same ? span_h / 2 : 0;
    const std::size_t pw = s.pad_w == Padding::Same ? span_w / 2 : 0;
    const std::size_t PH = s.pad_h == Padding::Same ? H + span_h : H;
    const std::size_t PW = s.pad_w == Padding::Same ? W + span_w : W;
    std::vector<double> padded(PH * PW * cin, 0.0);
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
            for (std::size_t c = 0; c < cin; ++c) padded[((h + ph) * PW + w + pw) * cin + c] = x.at(h, w, c);
    const std::size_t OH = PH - span_h, OW = PW - span_w;
    const std::size_t cig = cin / s.groups, cog = cout / s.groups;
    Tensor<double> out({OH, OW, cout});
    for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow)
            for (std::size_t co = 0; co < cout; ++co) {
                const std::size_t g = co / cog;
                double acc = bias ? (*bias)[co] : 0.0;
                for (std::size_t i = 0; i < KH; ++i)
                    for (std::size_t j = 0; j < KW; ++j)
                        for (std::size_t ci = 0; ci < cig; ++ci) {
                            const std::size_t hh = oh + i * s.dilation_h, ww = ow + j * s.dilation_w;
                            acc += padded[(hh * PW + ww) * cin + g * cig + ci] *
                                   k[((i * KW + j) * cig + ci) * cout + co];
                        }
                out.at(oh, ow, co) = acc;
            }
    return out;
}

struct ConvCase {
    Shape input;
    Shape kernels;
    Conv2dSpec spec;
};

std::vector<ConvCase> conv_cases() {
    return {
        {{1, 9, 4}, {1, 3, 2, 6}, {2, 1, 1, Padding::Same, Padding::Same}},
        {{1, 12, 4}, {1, 3, 2, 4}, {2, 1, 2, Padding::Same, Padding::Same}},
        {{2, 10, 1}, {2, 5, 1, 3}, {1, 1, 1, Padding::Valid, Padding::Same}},
        {{3, 7, 3}, {2, 2, 3, 2}, {1, 1, 1, Padding::Valid, Padding::Valid}},
        {{4, 8, 6}, {2, 3, 2, 6}, {3, 2, 2, Padding::Same, Padding::Same}},
        {{1, 6, 2}, {1, 4, 2, 2}, {1, 1, 1, Padding::Same, Padding::Same}},
    };
}

TEST(Conv2d, HandComputedExample) {
    Tensor<double> x({1, 3, 1}, {1.0, 2.0, 3.0});
    Tensor<double> k({1, 3, 1, 1}, {1.0, 0.0, -1.0});
    auto y = conv2d(x, k, Conv2dSpec{});
    EXPECT_EQ(y.values()[0], -2.0);
    EXPECT_EQ(y.values()[1], -2.0);
    EXPECT_EQ(y.values()[2], 2.0);
}

TEST(Conv2d, MatchesDirectSum) {
    std::mt19937_64 rng(11);
    for (const auto& c : conv_cases()) {
        auto x = random_tensor(c.input, rng);
        auto k = random_tensor(c.kernels, rng);
        auto b = random_tensor({c.kernels[3]}, rng);
        auto got = conv2d(x, k, c.spec, &b);
        auto want = naive_conv(x, k, c.spec, &b);
        ASSERT_EQ(got.shape(), want.shape());
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    }
}

TEST(Conv2d, GroupedEqualsIndependentConvolutions) {
    std::mt19937_64 rng(12);
    const std::size_t groups = 3, cig = 2, cog = 4;
    const Conv2dSpec grouped{groups, 1, 2, Padding::Same, Padding::Same};
    auto x = random_tensor({2, 11, groups * cig}, rng);
    auto k = random_tensor({1, 3, cig, groups * cog}, rng);
    auto y = conv2d(x, k, grouped);

    Conv2dSpec single = grouped;
    single.groups = 1;
    for (std::size_t g = 0; g < groups; ++g) {
        Tensor<double> xg({2, 11, cig});
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t w = 0; w < 11; ++w)
                for (std::size_t c = 0; c < cig; ++c) xg.at(h, w, c) = x.at(h, w, g * cig + c);
        Tensor<double> kg({1, 3, cig, cog});
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t ci = 0; ci < cig; ++ci)
                for (std::size_t co = 0; co < cog; ++co)
                    kg[(t * cig + ci) * cog + co] = k[(t * cig + ci) * groups * cog + g * cog + co];
        auto yg = conv2d(xg, kg, single);
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t w = 0; w < 11; ++w)
                for (std::size_t c = 0; c < cog; ++c) EXPECT_EQ(yg.at(h, w, c), y.at(h, w, g * cog + c));
    }
}

TEST(Conv2d, RejectsInconsistentShapes) {
    Tensor<double> x({1, 8, 4});
    EXPECT_EQ(test::thrown_kind([&] { conv2d(x, Tensor<double>({1, 3, 3, 4}), Conv2dSpec{}); }),
              ErrorKind::ShapeMismatch);
    EXPECT_EQ(test::thrown_kind([&] { conv2d(x, Tensor<double>({1, 3, 2, 3}), Conv2dSpec{2}); }),
              ErrorKind::InvalidArgument);
    Conv2dSpec valid{1, 1, 1, Padding::Valid, Padding::Valid};
    EXPECT_EQ(test::thrown_kind([&] { conv2d(x, Tensor<double>({2, 3, 4, 1}), valid); }),
              ErrorKind::ShapeMismatch);
}

TEST(Conv2d, Deterministic) {
    std::mt19937_64 rng(13);
    auto x = random_tensor<float>({1, 64, 24}, rng);
    auto k = random_tensor<float>({1, 3, 12, 24}, rng);
    const Conv2dSpec spec{2, 1, 2};
    EXPECT_EQ(conv2d(x, k, spec), conv2d(x, k, spec));
}

// Loss L = sum(R * op(x)); its gradient is the backward pass fed with R.
TEST(Conv2d, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(14);
    for (const auto& c : conv_cases()) {
        auto x = random_tensor(c.input, rng);
        auto k = random_tensor(c.kernels, rng);
        auto b = random_tensor({c.kernels[3]}, rng);
        auto r = random_tensor(conv2d_output_shape(c.input, c.kernels, c.spec), rng);

        Tensor<double> gx(x.shape()), gk(k.shape()), gb(b.shape());
        conv2d_backward(x, k, c.spec, r, &gx, &gk, &gb);

        auto wrt_x = finite_diff_check(
            [&](std::span<const double> v) { return test::weighted_sum(conv2d(test::from_span(x.shape(), v), k, c.spec, &b), r); },
            x.values(), gx.values(), 1e-6);
        auto wrt_k = finite_diff_check(
            [&](std::span<const double> v) { return test::weighted_sum(conv2d(x, test::from_span(k.shape(), v), c.spec, &b), r); },
            k.values(), gk.values(), 1e-6);
        auto wrt_b = finite_diff_check(
            [&](std::span<const double> v) {
                auto bb = test::from_span(b.shape(), v);
                return test::weighted_sum(conv2d(x, k, c.spec, &bb), r);
            },
            b.values(), gb.values(), 1e-6);
        EXPECT_TRUE(wrt_x.passed) << wrt_x.max_rel_error;
        EXPECT_TRUE(wrt_k.passed) << wrt_k.max_rel_error;
        EXPECT_TRUE(wrt_b.passed) << wrt_b.max_rel_error;
    }
}

TEST(Conv2d, BackwardAccumulates) {
    std::mt19937_64 rng(15);
    auto x = random_tensor({1, 6, 2}, rng);
    auto k = random_tensor({1, 3, 2, 2}, rng);
    auto r = random_tensor({1, 6, 2}, rng);
    Tensor<double> once(k.shape()), twice(k.shape());
    conv2d_backward(x, k, Conv2dSpec{}, r, static_cast<Tensor<double>*>(nullptr), &once);
    conv2d_backward(x, k, Conv2dSpec{}, r, static_cast<Tensor<double>*>(nullptr), &twice);
    conv2d_backward(x, k, Conv2dSpec{}, r, static_cast<Tensor<double>*>(nullptr), &twice);
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2.0 * once[i], 1e-12);
}

TEST(MaxPool, HalvesWidthAndPicksMaxima) {
    Tensor<double> x({1, 4, 2}, {1, -1, 3, -2, 5, 7, 5, 6});
    auto y = maxpool2d(x);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
    EXPECT_EQ(y.at(0, 0, 0), 3);
    EXPECT_EQ(y.at(0, 0, 1), -1);
    EXPECT_EQ(y.at(0, 1, 0), 5);
    EXPECT_EQ(y.at(0, 1, 1), 7);
}

TEST(MaxPool, TieSendsGradientToLowerIndex) {
    Tensor<double> x({1, 2, 1}, {4.0, 4.0});
    Tensor<double> g({1, 1, 1}, {1.0});
    Tensor<double> gx(x.shape());
    maxpool2d_backward(x, g, gx);
    EXPECT_EQ(gx[0], 1.0);
    EXPECT_EQ(gx[1], 0.0);
}

TEST(MaxPool, OddWidthRejected) {
    EXPECT_EQ(test::thrown_kind([] { maxpool2d(Tensor<double>({1, 5, 1})); }), ErrorKind::ShapeMismatch);
}

TEST(MaxPool, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(16);
    auto x = random_tensor({2, 8, 3}, rng);
    auto r = random_tensor({2, 4, 3}, rng);
    Tensor<double> gx(x.shape());
    maxpool2d_backward(x, r, gx);
    auto res = finite_diff_check(
        [&](std::span<const double> v) { return test::weighted_sum(maxpool2d(test::from_span(x.shape(), v)), r); },
        x.values(), gx.values(), 1e-6);
    EXPECT_TRUE(res.passed) << res.max_rel_error;
}

TEST(GlobalAvgPool, MeanPerChannelAndGradient) {
    Tensor<double> x({1, 4, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
    auto y = global_avg_pool(x);
    ASSERT_EQ(y.shape(), (Shape{2}));
    EXPECT_DOUBLE_EQ(y[0], 2.5);
    EXPECT_DOUBLE_EQ(y[1], 25.0);

    std::mt19937_64 rng(17);
    auto xr = random_tensor({2, 5, 3}, rng);
    auto r = random_tensor({3}, rng);
    Tensor<double> gx(xr.shape());
    global_avg_pool_backward(xr.shape(), r, gx);
    auto res = finite_diff_check(
        [&](std::span<const double> v) { return test::weighted_sum(global_avg_pool(test::from_span(xr.shape(), v)), r); },
        xr.values(), gx.values(), 1e-6);
    EXPECT_TRUE(res.passed) << res.max_rel_error;
}

TEST(Dense, ExampleAndGradients) {
    Tensor<double> x({2}, {1.0, 2.0});
    Tensor<double> w({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> b({3}, {0.5, 0.0, -0.5});
    auto y = dense(x, w, &b);
    EXPECT_DOUBLE_EQ(y[0], 9.5);
    EXPECT_DOUBLE_EQ(y[1], 12.0);
    EXPECT_DOUBLE_EQ(y[2], 14.5);

    std::mt19937_64 rng(18);
    auto xr = random_tensor({5}, rng);
    auto wr = random_tensor({5, 4}, rng);
    auto br = random_tensor({4}, rng);
    auto r = random_tensor({4}, rng);
    Tensor<double> gx(xr.shape()), gw(wr.shape()), gb(br.shape());
    dense_backward(xr, wr, r, &gx, &gw, &gb);
    auto fx = finite_diff_check(
        [&](std::span<const double> v) { return test::weighted_sum(dense(test::from_span(xr.shape(), v), wr, &br), r); },
        xr.values(), gx.values(), 1e-6);
    auto fw = finite_diff_check(
        [&](std::span<const double> v) { return test::weighted_sum(dense(xr, test::from_span(wr.shape(), v), &br), r); },
        wr.values(), gw.values(), 1e-6);
    auto fb = finite_diff_check(
        [&](std::span<const double> v) {
            auto bb = test::from_span(br.shape(), v);
            return test::weighted_sum(dense(xr, wr, &bb), r);
        },
        br.values(), gb.values(), 1e-6);
    EXPECT_TRUE(fx.passed);
    EXPECT_TRUE(fw.passed);
    EXPECT_TRUE(fb.passed);
}

TEST(Relu, ForwardAndSubgradientAtZero) {
    Tensor<double> x({4}, {-1.0, 0.0, 2.0, -0.0});
    auto y = relu(x);
    EXPECT_EQ(y[0], 0.0);
    EXPECT_EQ(y[1], 0.0);
    EXPECT_EQ(y[2], 2.0);
    Tensor<double> g({4}, 1.0), gx({4});
    relu_backward(x, g, gx);
    EXPECT_EQ(gx[0], 0.0);
    EXPECT_EQ(gx[1], 0.0);
    EXPECT_EQ(gx[2], 1.0);
    EXPECT_EQ(gx[3], 0.0);
}

TEST(Softmax, SumsToOneAndSurvivesLargeLogits) {
    Tensor<double> logits({3}, {1000.0, 999.0, -1000.0});
    auto p = softmax(logits);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
    EXPECT_NEAR(p[0] / p[1], std::exp(1.0), 1e-12);
    EXPECT_EQ(p[2], 0.0);

    Tensor<float> f({11}, 0.0f);
    auto u = softmax(f);
    for (float v : u.values()) EXPECT_NEAR(v, 1.0f / 11.0f, 1e-7f);
}

TEST(Softmax, ShiftInvariant) {
    std::mt19937_64 rng(19);
    auto a = random_tensor({7}, rng, -5, 5);
    Tensor<double> b = a;
    for (auto& v : b.values()) v += 123.25;
    auto pa = softmax(a), pb = softmax(b);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(pa[i], pb[i], 1e-12);
}

TEST(Adam, FirstStepsMatchClosedForm) {
    Tensor<double> p({2}, {1.0, -2.0});
    std::vector<ParamBlock<double>> blocks{{"p", &p}};
    AdamState<double> state;
    const double lr = 0.1;
    const std::vector<double> g1 = {0.5, -3.0}, g2 = {-1.0, 2.0};

    // Reference recursion written out directly.
    double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -2.0};
    for (int step = 1; step <= 2; ++step) {
        const auto& g = step == 1 ? g1 : g2;
        std::vector<Tensor<double>> grads{Tensor<double>({2}, g)};
        adam_step<double>(blocks, grads, state, lr);
        for (int i = 0; i < 2; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(0.9, step));
            const double vh = v[i] / (1 - std::pow(0.999, step));
            ref[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
        }
        EXPECT_NEAR(p[0], ref[0], 1e-12);
        EXPECT_NEAR(p[1], ref[1], 1e-12);
    }
    EXPECT_EQ(state.step, 2u);
    // The first update has magnitude lr regardless of gradient scale.
    Tensor<double> q({1}, {0.0});
    AdamState<double> fresh;
    std::vector<ParamBlock<double>> qb{{"q", &q}};
    adam_step<double>(qb, std::vector<Tensor<double>>{Tensor<double>({1}, {1e-3})}, fresh, lr);
    EXPECT_NEAR(q[0], -lr, 1e-6);
}

TEST(Adam, NonFiniteGradientNamesBlockAndLeavesParams) {
    Tensor<double> a({1}, {1.0}), b({1}, {2.0});
    std::vector<ParamBlock<double>> blocks{{"first", &a}, {"second", &b}};
    AdamState<double> state;
    std::vector<Tensor<double>> grads{Tensor<double>({1}, {0.1}), Tensor<double>({1}, {std::nan("")})};
    try {
        adam_step<double>(blocks, grads, state, 0.01);
        FAIL() << "expected NonFinite";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
        EXPECT_NE(std::string(e.what()).find("second"), std::string::npos);
    }
    EXPECT_EQ(a[0], 1.0);
    EXPECT_EQ(b[0], 2.0);
}

TEST(GradCheck, DetectsWrongGradient) {
    auto f = [](std::span<const double> v) { return v[0] * v[0] + 3.0 * v[1]; };
    const std::vector<double> x = {1.5, -2.0};
    const std::vector<double> good = {3.0, 3.0}, bad = {3.0, 2.9};
    EXPECT_TRUE(finite_diff_check(f, x, good, 1e-6).passed);
    auto res = finite_diff_check(f, x, bad, 1e-6);
    EXPECT_FALSE(res.passed);
    EXPECT_EQ(res.worst_index, 1u);
}

TEST(Tensor, RejectsBadShapes) {
    EXPECT_EQ(test::thrown_kind([] { Tensor<float>({2, 2}, std::vector<float>(3)); }), ErrorKind::ShapeMismatch);
    EXPECT_THROW(Tensor<float>(Shape{1, 1, 1, 1, 1}), Error);
    EXPECT_THROW(Tensor<float>(Shape{2, 0}), Error);
}

}  // namespace
}  // namespace amc

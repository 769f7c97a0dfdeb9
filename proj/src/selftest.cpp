#include "amc/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

#include "amc/gradcheck.hpp"
#include "amc/losses.hpp"
#include "amc/model.hpp"
#include "amc/ops.hpp"
#include "amc/signal.hpp"

namespace amc {

bool SelfTestReport::passed() const {
    return std::all_of(cases.begin(), cases.end(), [](const SelfTestCase& c) { return c.passed; });
}

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kMinKinkMargin = 1e-3;

using D = Tensor<double>;

D random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    D t(shape);
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

double dot(const D& a, const D& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double min_abs(const D& t) {
    double m = std::numeric_limits<double>::infinity();
    for (double v : t.values()) m = std::min(m, std::abs(v));
    return m;
}

// Perturbs the listed tensors in place through a flat view, evaluating `loss`
// after each write, then restores them.
GradCheckResult check_tensors(const std::vector<D*>& targets, const std::vector<const D*>& grads,
                              const std::function<double()>& loss) {
    std::vector<double> x0, g;
    for (const D* t : targets) x0.insert(x0.end(), t->values().begin(), t->values().end());
    for (const D* t : grads) g.insert(g.end(), t->values().begin(), t->values().end());
    auto write = [&](std::span<const double> v) {
        std::size_t off = 0;
        for (D* t : targets) {
            std::copy(v.begin() + std::ptrdiff_t(off), v.begin() + std::ptrdiff_t(off + t->size()), t->data());
            off += t->size();
        }
    };
    auto res = finite_diff_check(
        [&](std::span<const double> v) {
            write(v);
            return loss();
        },
        x0, g, kGradTolerance);
    write(x0);
    return res;
}

SelfTestCase grad_case(const std::string& name, const GradCheckResult& r) {
    return {name, r.passed, r.max_rel_error, kGradTolerance};
}

void layer_cases(std::mt19937_64& rng, std::vector<SelfTestCase>& out) {
    {
        const Conv2dSpec spec{2, 1, 2, Padding::Same, Padding::Same};
        D x = random_tensor({1, 10, 4}, rng), k = random_tensor({1, 3, 2, 6}, rng), b = random_tensor({6}, rng);
        const D r = random_tensor({1, 10, 6}, rng);
        D gx(x.shape()), gk(k.shape()), gb(b.shape());
        conv2d_backward(x, k, spec, r, &gx, &gk, &gb);
        out.push_back(grad_case("conv2d grouped dilated",
                                check_tensors({&x, &k, &b}, {&gx, &gk, &gb}, [&] { return dot(conv2d(x, k, spec, &b), r); })));
    }
    {
        const Conv2dSpec spec = first_conv_spec();
        D x = random_tensor({2, 9, 1}, rng), k = random_tensor({2, 5, 1, 3}, rng), b = random_tensor({3}, rng);
        const D r = random_tensor({1, 9, 3}, rng);
        D gx(x.shape()), gk(k.shape()), gb(b.shape());
        conv2d_backward(x, k, spec, r, &gx, &gk, &gb);
        out.push_back(grad_case("conv2d valid height",
                                check_tensors({&x, &k, &b}, {&gx, &gk, &gb}, [&] { return dot(conv2d(x, k, spec, &b), r); })));
    }
    {
        D x = random_tensor({2, 8, 3}, rng);
        const D r = random_tensor({2, 4, 3}, rng);
        D gx(x.shape());
        maxpool2d_backward(x, r, gx);
        out.push_back(grad_case("maxpool2d", check_tensors({&x}, {&gx}, [&] { return dot(maxpool2d(x), r); })));
    }
    {
        D x = random_tensor({1, 7, 5}, rng);
        const D r = random_tensor({5}, rng);
        D gx(x.shape());
        global_avg_pool_backward(x.shape(), r, gx);
        out.push_back(grad_case("global_avg_pool", check_tensors({&x}, {&gx}, [&] { return dot(global_avg_pool(x), r); })));
    }
    {
        D x = random_tensor({6}, rng), w = random_tensor({6, 4}, rng), b = random_tensor({4}, rng);
        const D r = random_tensor({4}, rng);
        D gx(x.shape()), gw(w.shape()), gb(b.shape());
        dense_backward(x, w, r, &gx, &gw, &gb);
        out.push_back(grad_case("dense", check_tensors({&x, &w, &b}, {&gx, &gw, &gb}, [&] { return dot(dense(x, w, &b), r); })));
    }
    {
        D x = random_tensor({20}, rng);
        while (min_abs(x) < kMinKinkMargin) x = random_tensor({20}, rng);
        const D r = random_tensor({20}, rng);
        D gx(x.shape());
        relu_backward(x, r, gx);
        out.push_back(grad_case("relu", check_tensors({&x}, {&gx}, [&] { return dot(relu(x), r); })));
    }
    {
        D z = random_tensor({11}, rng, 3.0);
        const std::size_t label = 4;
        const D p = softmax(z);
        D gz = p;
        gz[label] -= 1.0;
        out.push_back(grad_case("softmax cross entropy",
                                check_tensors({&z}, {&gz}, [&] { return ce_loss<double>(softmax(z).values(), label); })));
    }
}

FusionParams<double> random_fusion(std::size_t C, std::size_t d, double lambda, std::mt19937_64& rng) {
    return {random_tensor({C, d}, rng), random_tensor({d, C}, rng), random_tensor({d, C}, rng), lambda};
}

FusionParams<double> zero_fusion_like(const FusionParams<double>& p) {
    return {D(p.squeeze.shape()), D(p.to_a.shape()), D(p.to_b.shape()), p.lambda};
}

void fusion_cases(std::mt19937_64& rng, std::vector<SelfTestCase>& out) {
    for (double lambda : {1.0, 2.0}) {
        const std::size_t C = 8, d = 2;
        D A, B;
        FusionParams<double> fp;
        FusionCache<double> cache;
        do {
            A = random_tensor({1, 6, C}, rng);
            B = random_tensor({1, 6, C}, rng);
            fp = random_fusion(C, d, lambda, rng);
            fusion_forward(A, B, fp, &cache);
        } while (min_abs(cache.squeeze_pre) < kMinKinkMargin);
        const D r = random_tensor(A.shape(), rng);
        D gA(A.shape()), gB(B.shape());
        auto gp = zero_fusion_like(fp);
        fusion_backward(A, B, fp, cache, r, gA, gB, gp);
        const auto res = check_tensors({&A, &B, &fp.squeeze, &fp.to_a, &fp.to_b},
                                       {&gA, &gB, &gp.squeeze, &gp.to_a, &gp.to_b},
                                       [&] { return dot(fusion_forward(A, B, fp), r); });
        out.push_back(grad_case(lambda == 1.0 ? "fusion lambda=1" : "fusion lambda=2", res));
    }
}

double unit_margin(const AFUnitCache<double>& c) {
    return std::min({min_abs(c.small_pre), min_abs(c.large_pre), min_abs(c.branch.squeeze_pre),
                     min_abs(c.skip.squeeze_pre)});
}

void af_unit_case(std::mt19937_64& rng, std::vector<SelfTestCase>& out) {
    ModelConfig cfg = ModelConfig::tiny();
    cfg.units = 1;
    cfg.pool_after = {};
    AFNetParams<double> net;
    D x;
    AFUnitCache<double> cache;
    do {
        net = init_params<double>(cfg, rng());
        x = random_tensor({1, 12, cfg.channels}, rng);
        af_unit_forward(x, net.units[0], cfg, &cache);
    } while (unit_margin(cache) < kMinKinkMargin);
    auto& u = net.units[0];
    const D r = random_tensor(x.shape(), rng);
    D gx(x.shape());
    auto grads = net.zeros_like();
    auto& gu = grads.units[0];
    af_unit_backward(u, cfg, cache, r, gx, gu);
    const auto res = check_tensors(
        {&x, &u.small_kernels, &u.large_kernels, &u.branch_fusion.squeeze, &u.branch_fusion.to_a,
         &u.branch_fusion.to_b, &u.skip_fusion.squeeze, &u.skip_fusion.to_a, &u.skip_fusion.to_b},
        {&gx, &gu.small_kernels, &gu.large_kernels, &gu.branch_fusion.squeeze, &gu.branch_fusion.to_a,
         &gu.branch_fusion.to_b, &gu.skip_fusion.squeeze, &gu.skip_fusion.to_a, &gu.skip_fusion.to_b},
        [&] { return dot(af_unit_forward(x, u, cfg), r); });
    out.push_back(grad_case("af unit", res));
}

void network_cases(std::mt19937_64& rng, std::vector<SelfTestCase>& out) {
    const ModelConfig cfg = ModelConfig::tiny();
    GeneratorConfig gen;
    gen.frame_length = cfg.frame_length;
    for (double weight : {1.0, 0.7}) {
        AFNetParams<double> net;
        D frame;
        NetworkCache<double> cache;
        do {
            net = init_params<double>(cfg, rng());
            const auto rec = modulate_frame(Modulation::QPSK, 10, rng(), gen);
            frame = frame_tensor<double>(rec.iq, cfg.frame_length);
            afnet_forward(frame, net, &cache);
        } while (kink_margin(cache) < kMinKinkMargin);

        // runner-up class keeps the loss away from both 0 and the log clamp
        std::vector<double> p(cache.probs.values().begin(), cache.probs.values().end());
        const std::size_t top = argmax(std::span<const double>(p));
        p[top] = -1.0;
        const std::size_t label = argmax(std::span<const double>(p));

        D grad_logits = cache.probs;
        grad_logits[label] -= 1.0;
        for (auto& v : grad_logits.values()) v *= weight;
        auto grads = net.zeros_like();
        D grad_frame(frame.shape());
        afnet_backward(net, cache, grad_logits, grads, &grad_frame);

        std::vector<D*> targets{&frame};
        std::vector<const D*> analytic{&grad_frame};
        for (auto& b : net.blocks()) targets.push_back(b.value);
        for (auto& b : grads.blocks()) analytic.push_back(b.value);
        const auto res = check_tensors(targets, analytic, [&] {
            return cw_loss<double>(afnet_forward(frame, net).values(), label, weight);
        });
        out.push_back(grad_case(weight == 1.0 ? "tiny network, cross entropy" : "tiny network, weighted loss w=0.7", res));
    }
}

SelfTestCase bound_case(const std::string& name, double metric, double threshold) {
    return {name, metric < threshold, metric, threshold};
}

SelfTestCase flag_case(const std::string& name, bool ok) { return {name, ok, ok ? 0.0 : 1.0, 0.5}; }

}  // namespace

SelfTestReport run_gradient_suite(std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(seed);
    SelfTestReport report;
    layer_cases(rng, report.cases);
    fusion_cases(rng, report.cases);
    af_unit_case(rng, report.cases);
    network_cases(rng, report.cases);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

SelfTestReport run_invariant_suite(std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(seed);
    SelfTestReport report;
    auto& cases = report.cases;

    {
        double sum_err = 0.0, shift_err = 0.0;
        std::uniform_real_distribution<double> logit(-30.0, 30.0), shift(-50.0, 50.0);
        for (int i = 0; i < 10000; ++i) {
            const double lambda = (i % 2) ? 2.0 : 1.0;
            D a({4}), b({4});
            for (std::size_t c = 0; c < 4; ++c) {
                a[c] = logit(rng);
                b[c] = logit(rng);
            }
            const auto [alpha, beta] = lambda_softmax(a, b, lambda);
            D as = a, bs = b;
            const double t = shift(rng);
            for (std::size_t c = 0; c < 4; ++c) {
                as[c] += t;
                bs[c] += t;
            }
            const auto [alpha2, beta2] = lambda_softmax(as, bs, lambda);
            for (std::size_t c = 0; c < 4; ++c) {
                sum_err = std::max(sum_err, std::abs(alpha[c] + beta[c] - lambda));
                shift_err = std::max({shift_err, std::abs(alpha[c] - alpha2[c]), std::abs(beta[c] - beta2[c])});
            }
        }
        cases.push_back(bound_case("lambda-softmax alpha+beta=lambda", sum_err, 1e-12));
        cases.push_back(bound_case("lambda-softmax shift invariance", shift_err, 1e-9));
    }
    {
        bool ok = true;
        for (std::size_t r : {16u, 8u}) {
            ModelConfig cfg;
            cfg.compression = r;
            cfg.units = 1;
            cfg.pool_after = {};
            const auto p = init_params<double>(cfg, 1);
            const std::size_t expect = 3 * 48 * 48 / r;
            ok = ok && count_fusion_params(48, r) == expect && p.units[0].branch_fusion.value_count() == expect &&
                 p.units[0].skip_fusion.value_count() == expect;
        }
        cases.push_back(flag_case("fusion value count 3C^2/r", ok));
    }
    {
        const std::vector<double> uniform(11, 1.0 / 11.0);
        cases.push_back(bound_case("ce(uniform) = ln 11", std::abs(ce_loss<double>(uniform, 3) - std::log(11.0)), 1e-9));
        std::vector<double> one_hot(11, 0.0);
        one_hot[2] = 1.0;
        cases.push_back(bound_case("confidence weight of one-hot", std::abs(confidence_weight<double>(one_hot, 3) - 1.0), 1e-15));
        const std::vector<double> top_uniform = {0.3, 0.3, 0.3, 0.1};
        cases.push_back(bound_case("confidence weight of top-k uniform", std::abs(confidence_weight<double>(top_uniform, 3)), 1e-12));
        const std::vector<double> p = {0.5, 0.25, 0.25, 0, 0, 0, 0, 0, 0, 0, 0};
        const double h = -(0.5 * std::log(0.5) + 0.5 * std::log(0.25));
        cases.push_back(bound_case("confidence weight k=3 example",
                                   std::abs(confidence_weight<double>(p, 3) - (1.0 - h / std::log(3.0))), 1e-12));
        const std::vector<double> pa = {0.5, 0.25, 0.25}, pb = {0.5, 0.5, 0.0};
        const double margin = topk_entropy<double>(pb, 2) - topk_entropy<double>(pa, 2);
        cases.push_back(flag_case("top-2 entropy ranks [0.5,0.5,0] as more uncertain", margin > 0.0));
    }
    {
        double worst = 0.0;
        for (std::size_t i = 0; i < kNumModulations; ++i) {
            const auto m = modulation_from_index(i);
            if (has_constellation(m)) {
                double e = 0.0;
                const auto pts = constellation(m);
                for (const auto& v : pts) e += std::norm(v);
                worst = std::max(worst, std::abs(e / double(pts.size()) - 1.0));
            }
        }
        cases.push_back(bound_case("constellation unit energy", worst, 1e-9));
    }
    {
        double worst = 0.0;
        for (std::size_t i = 0; i < kNumModulations; ++i) {
            const auto f = synthesize_frame(modulation_from_index(i), 0, rng(), GeneratorConfig{});
            double p = 0.0;
            for (const auto& v : f.clean) p += std::norm(v);
            worst = std::max(worst, std::abs(p / double(f.clean.size()) - 1.0));
        }
        cases.push_back(bound_case("frame power before noise", worst, 1e-6));
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace amc

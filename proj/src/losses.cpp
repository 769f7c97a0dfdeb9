#include "amc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "amc/error.hpp"

namespace amc {

namespace {

double clamped_log(double p) { return std::log(std::max(p, kProbClamp)); }

template <typename T>
std::size_t one_hot_index(std::span<const T> probs, std::span<const T> one_hot) {
    if (probs.size() != one_hot.size()) {
        throw Error(ErrorKind::ShapeMismatch, "one-hot label has " + std::to_string(one_hot.size()) +
                                                  " entries, prediction has " + std::to_string(probs.size()));
    }
    std::size_t ones = 0, index = 0;
    for (std::size_t i = 0; i < one_hot.size(); ++i) {
        if (one_hot[i] == T(1)) {
            ++ones;
            index = i;
        } else if (one_hot[i] != T(0)) {
            ones = 2;
            break;
        }
    }
    if (ones != 1) throw Error(ErrorKind::InvalidArgument, "label vector is not one-hot");
    return index;
}

void check_k(std::size_t size, std::size_t k) {
    if (k < 2 || k > size) {
        throw Error(ErrorKind::InvalidArgument, "top-k needs 2 <= k <= " + std::to_string(size) + ", got k=" +
                                                    std::to_string(k));
    }
}

void check_weight(double w) {
    if (!(w >= 0.0 && w <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "confidence weight must lie in [0, 1], got " + std::to_string(w));
    }
}

}  // namespace

template <typename T>
double ce_loss(std::span<const T> probs, std::size_t label) {
    if (label >= probs.size()) {
        throw Error(ErrorKind::InvalidArgument, "label " + std::to_string(label) + " outside " +
                                                    std::to_string(probs.size()) + " classes");
    }
    return -clamped_log(double(probs[label]));
}

template <typename T>
double ce_loss(std::span<const T> probs, std::span<const T> one_hot) {
    return ce_loss(probs, one_hot_index(probs, one_hot));
}

template <typename T>
double entropy_full(std::span<const T> probs) {
    double h = 0.0;
    for (T p : probs) {
        if (p > T(0)) h -= double(p) * std::log(double(p));
    }
    return h;
}

template <typename T>
double topk_entropy(std::span<const T> probs, std::size_t k) {
    check_k(probs.size(), k);
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    double mass = 0.0;
    for (std::size_t i = 0; i < k; ++i) mass += double(probs[order[i]]);
    if (!(mass > 0.0)) throw Error(ErrorKind::InvalidArgument, "top-k probabilities sum to zero");
    double h = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double q = double(probs[order[i]]) / mass;
        if (q > 0.0) h -= q * std::log(q);
    }
    return h;
}

template <typename T>
double confidence_weight(std::span<const T> probs, std::size_t k) {
    const double w = 1.0 - topk_entropy(probs, k) / std::log(double(k));
    return std::clamp(w, 0.0, 1.0);
}

template <typename T>
double cw_loss(std::span<const T> probs, std::size_t label, double weight) {
    check_weight(weight);
    return weight * ce_loss(probs, label);
}

template <typename T>
double cw_loss(std::span<const T> probs, std::span<const T> one_hot, double weight) {
    check_weight(weight);
    return weight * ce_loss(probs, one_hot);
}

#define AMC_INSTANTIATE_LOSSES(T)                                                  \
    template double ce_loss<T>(std::span<const T>, std::span<const T>);            \
    template double ce_loss<T>(std::span<const T>, std::size_t);                   \
    template double entropy_full<T>(std::span<const T>);                           \
    template double topk_entropy<T>(std::span<const T>, std::size_t);              \
    template double confidence_weight<T>(std::span<const T>, std::size_t);         \
    template double cw_loss<T>(std::span<const T>, std::span<const T>, double);    \
    template double cw_loss<T>(std::span<const T>, std::size_t, double);

AMC_INSTANTIATE_LOSSES(float)
AMC_INSTANTIATE_LOSSES(double)

}  // namespace amc

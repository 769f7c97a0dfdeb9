#pragma once

// Per-instance losses and confidence measures. Natural logarithm throughout;
// probabilities are clamped below at kProbClamp before any log.

#include <cstddef>
#include <span>

namespace amc {

inline constexpr double kProbClamp = 1e-12;

// -sum y_i log p_i. y must be one-hot.
template <typename T>
double ce_loss(std::span<const T> probs, std::span<const T> one_hot);

template <typename T>
double ce_loss(std::span<const T> probs, std::size_t label);

// -sum p_i log p_i with 0 log 0 = 0.
template <typename T>
double entropy_full(std::span<const T> probs);

// Entropy of the k largest probabilities renormalized to sum 1. Equal
// probabilities at the cut are taken in ascending class order.
template <typename T>
double topk_entropy(std::span<const T> probs, std::size_t k);

// 1 - H_topk / log k, in [0, 1].
template <typename T>
double confidence_weight(std::span<const T> probs, std::size_t k);

template <typename T>
double cw_loss(std::span<const T> probs, std::span<const T> one_hot, double weight);

template <typename T>
double cw_loss(std::span<const T> probs, std::size_t label, double weight);

}  // namespace amc

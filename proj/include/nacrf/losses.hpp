#pragma once

#include <span>

#include "nacrf/tensor.hpp"

namespace nacrf {

inline constexpr double kProbFloor = 1e-12;

template <typename S>
struct TokenLoss {
  S value = 0;
  EmissionMatrix<S> d_emissions;  // d value / d emissions
  S mean_prob = 0;                // mean p_t of the gold labels
};

/// Focal token loss -sum_t (1 - p_t)^gamma log p_t with p_t = softmax(s_t)[y_t].
/// The gradient differentiates the focal weight as well. gamma = 0 gives the
/// plain cross-entropy sum.
template <typename S>
TokenLoss<S> loss_dp(const EmissionMatrix<S>& emissions, std::span<const TokenId> gold, S gamma);

template <typename S>
struct SequenceLoss {
  S value = 0;
  S multiplier = 1;  // d value / d nll
  S prob = 0;        // P = exp(-nll), clamped to [0, 1]
};

/// Focal sequence loss (1 - P)^gamma * nll with P = exp(-nll).
template <typename S>
SequenceLoss<S> loss_crf(S nll, S gamma);

}  // namespace nacrf

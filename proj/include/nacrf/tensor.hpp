#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace nacrf {

using TokenId = std::int32_t;
using IdSeq = std::vector<TokenId>;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// [T x |V|] per-position label scores.
template <typename S>
using EmissionMatrix = Mat<S>;

/// log(sum(exp(x))) over a contiguous range, shifted by the running max.
template <typename S>
S log_sum_exp(std::span<const S> xs) {
  S hi = -std::numeric_limits<S>::infinity();
  for (S x : xs) hi = x > hi ? x : hi;
  if (!std::isfinite(hi)) return hi;
  S acc = 0;
  for (S x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

template <typename S, typename Derived>
S log_sum_exp(const Eigen::MatrixBase<Derived>& xs) {
  const S hi = xs.maxCoeff();
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((xs.array() - hi).exp().sum());
}

}  // namespace nacrf

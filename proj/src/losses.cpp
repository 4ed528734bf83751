#include "nacrf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nacrf {

template <typename S>
TokenLoss<S> loss_dp(const EmissionMatrix<S>& emissions, std::span<const TokenId> gold, S gamma) {
  if (static_cast<Eigen::Index>(gold.size()) != emissions.rows()) {
    throw std::invalid_argument("loss_dp: gold length differs from emission rows");
  }
  if (gamma < 0) throw std::invalid_argument("loss_dp: gamma must be >= 0");
  const S log_floor = static_cast<S>(std::log(kProbFloor));
  TokenLoss<S> out;
  out.d_emissions.resize(emissions.rows(), emissions.cols());
  for (Eigen::Index t = 0; t < emissions.rows(); ++t) {
    const TokenId y = gold[static_cast<std::size_t>(t)];
    if (y < 0 || y >= emissions.cols()) throw std::out_of_range("loss_dp: gold label outside vocab");
    const auto row = emissions.row(t);
    const S hi = row.maxCoeff();
    auto probs = out.d_emissions.row(t);
    probs = (row.array() - hi).exp();
    const S z = probs.sum();
    probs /= z;
    const S log_p = std::max(row(y) - hi - std::log(z), log_floor);
    const S p = std::exp(log_p);
    out.mean_prob += p;

    // value_t = -w * log p with w = (1 - p)^gamma; d value_t / d log p:
    S d_logp;
    if (gamma == 0) {
      out.value -= log_p;
      d_logp = -1;
    } else {
      const S q = std::max(-std::expm1(log_p), static_cast<S>(kProbFloor));
      const S w = std::pow(q, gamma);
      out.value -= w * log_p;
      d_logp = -w + gamma * std::pow(q, gamma - 1) * p * log_p;
    }
    // d log p / d s_j = 1[j = y] - softmax_j
    probs *= -d_logp;
    probs(y) += d_logp;
  }
  if (emissions.rows() > 0) out.mean_prob /= static_cast<S>(emissions.rows());
  return out;
}

template <typename S>
SequenceLoss<S> loss_crf(S nll, S gamma) {
  if (gamma < 0) throw std::invalid_argument("loss_crf: gamma must be >= 0");
  const S clamped = std::max(nll, static_cast<S>(0));
  SequenceLoss<S> out;
  out.prob = std::clamp(std::exp(-clamped), static_cast<S>(0), static_cast<S>(1));
  if (gamma == 0) {
    out.value = nll;
    out.multiplier = 1;
    return out;
  }
  const S q = std::max(-std::expm1(-clamped), static_cast<S>(kProbFloor));
  const S w = std::pow(q, gamma);
  out.value = w * nll;
  // d(1 - P)/d nll = P
  out.multiplier = w + nll * gamma * std::pow(q, gamma - 1) * out.prob;
  return out;
}

template TokenLoss<float> loss_dp<float>(const EmissionMatrix<float>&, std::span<const TokenId>, float);
template TokenLoss<double> loss_dp<double>(const EmissionMatrix<double>&, std::span<const TokenId>, double);
template SequenceLoss<float> loss_crf<float>(float, float);
template SequenceLoss<double> loss_crf<double>(double, double);

}  // namespace nacrf

#pragma once

#include <span>
#include <vector>

#include "nacrf/model.hpp"
#include "nacrf/tensor.hpp"

namespace nacrf {

/// Candidate labels at one position, by descending emission score then id.
template <typename S>
struct LatticeStep {
  std::vector<TokenId> labels;
  std::vector<S> scores;  // emission score of each label

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  /// Index of `label` in this step, or -1.
  [[nodiscard]] int find(TokenId label) const;
};

template <typename S>
struct Lattice {
  std::vector<LatticeStep<S>> steps;

  [[nodiscard]] std::size_t length() const { return steps.size(); }
};

/// How build_lattice picks each position's candidates.
enum class LatticeRanking {
  emission,  // top-k of s_t
  forward,   // top-k of the forward score restricted to the previous beam
};

template <typename S>
struct Decoded {
  IdSeq labels;
  S score = 0;
};

template <typename S>
struct CrfGradient {
  EmissionMatrix<S> d_emissions;  // zero outside the lattice
  Mat<S> d_e1;
  Mat<S> d_e2;
  S nll = 0;
  S log_norm = 0;
};

/// Transition score t(from, to). All CRF routines evaluate transitions
/// through this one function so exact and beamed decoders see bit-identical
/// values for the same label pair.
template <typename S>
S transition_score(const CrfTransitions<S>& trans, TokenId from, TokenId to);

/// Block of transition scores for rows x cols label lists, evaluated on demand.
template <typename S>
Mat<S> transition_block(const CrfTransitions<S>& trans, std::span<const TokenId> rows,
                        std::span<const TokenId> cols);

/// The full [|V| x |V|] matrix M = E1 E2^T. Exact routines and test oracles only.
template <typename S>
Mat<S> dense_transitions(const CrfTransitions<S>& trans);

/// sum_t s_t[y_t] + sum_{t>=2} t(y_{t-1}, y_t).
template <typename S>
S sequence_score(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans,
                 std::span<const TokenId> labels);

/// log Z by the forward recursion over every label.
template <typename S>
S log_norm_exact(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans);
template <typename S>
S log_norm_dense(const EmissionMatrix<S>& emissions, const Mat<S>& dense);

/// Top-k candidates per position. When `forced` is non-empty its label at
/// each position is guaranteed a slot, evicting the k-th candidate if needed.
template <typename S>
Lattice<S> build_lattice(const EmissionMatrix<S>& emissions, int k, std::span<const TokenId> forced = {});

/// Same contract, but candidates at t >= 2 are ranked by their forward score
/// over the previous beam instead of the raw emission.
template <typename S>
Lattice<S> build_lattice_forward(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans, int k,
                                 std::span<const TokenId> forced = {});

template <typename S>
Lattice<S> build_lattice(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans, int k,
                         LatticeRanking ranking, std::span<const TokenId> forced = {}) {
  return ranking == LatticeRanking::emission ? build_lattice(emissions, k, forced)
                                             : build_lattice_forward(emissions, trans, k, forced);
}

/// Forward recursion restricted to the lattice.
template <typename S>
S log_norm_truncated(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans, const Lattice<S>& lattice);

/// Max-score path over all labels; ties go to the lowest id.
template <typename S>
Decoded<S> viterbi_exact(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans);
template <typename S>
Decoded<S> viterbi_dense(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans, const Mat<S>& dense);

/// Max-score path restricted to the lattice; ties go to the lowest id.
template <typename S>
Decoded<S> viterbi_beamed(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans,
                          const Lattice<S>& lattice);

/// NLL of `gold` under the truncated normalizer with its gradients, by
/// forward-backward on the lattice. `gold` must lie inside the lattice.
template <typename S>
CrfGradient<S> crf_grad(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans,
                        std::span<const TokenId> gold, const Lattice<S>& lattice);

}  // namespace nacrf

#pragma once

#include <set>
#include <string>
#include <vector>

#include "nacrf/tensor.hpp"

namespace nacrf {

struct ScoreBlock {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t tp = 0;
  std::size_t tn = 0;
};

/// Sentence-level detection and correction scores.
struct MetricsReport {
  ScoreBlock detection;
  ScoreBlock correction;
  std::size_t n_total = 0;
  std::size_t n_flagged = 0;
  std::size_t n_gold_error = 0;
};

/// Positions where two equal-length padded sequences differ.
std::set<std::size_t> error_positions(std::span<const TokenId> src, std::span<const TokenId> ref);

/// Content ids of a sequence: everything before the first `<eos>`, minus
/// `<pad>`/`<mask>` fillers.
IdSeq strip_content(std::span<const TokenId> ids);

/// Content + `<eos>` of each sequence, padded to their common length: the
/// source with `<mask>`, the others with `<pad>`.
struct AlignedTriple {
  IdSeq source, prediction, reference;
};
AlignedTriple align_triple(std::span<const TokenId> source, std::span<const TokenId> prediction,
                           std::span<const TokenId> reference);

/// A sentence is flagged when its prediction differs from its source.
/// Detection TP: flagged and the changed positions equal the gold ones.
/// Correction TP: flagged and the prediction equals the reference.
/// TN: not flagged and the reference equals the source.
MetricsReport evaluate(const std::vector<IdSeq>& predictions, const std::vector<IdSeq>& sources,
                       const std::vector<IdSeq>& references);

std::string format_table(const MetricsReport& report);
std::string format_key_values(const MetricsReport& report);

}  // namespace nacrf

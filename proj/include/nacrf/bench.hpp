#pragma once

#include <string>
#include <vector>

#include "nacrf/corrector.hpp"

namespace nacrf {

inline constexpr std::size_t kMinBenchSamples = 30;

struct BenchReport {
  std::string decoder;  // "exact" or "beam-k<k>"
  int k = 0;            // 0 for exact
  double mean_ms = 0;
  double median_ms = 0;
  double p95_ms = 0;
  std::size_t samples = 0;  // timed decodes across all repetitions
  double agreement = 1.0;   // fraction of inputs whose path equals the exact path
  std::vector<double> repetition_mean_ms;
};

struct BenchOptions {
  std::vector<int> k_values{64};
  int repetitions = 2;
  int warmup = 3;
  std::optional<std::size_t> mask_margin;
};

/// Per-sample decoding latency of exact and beamed Viterbi on precomputed
/// emissions (the encoder pass is not timed; M = E1 E2^T is built once
/// before timing). Single-threaded.
std::vector<BenchReport> bench_decoders(const Corrector& model, const std::vector<IdSeq>& inputs,
                                        const BenchOptions& options);

std::string format_table(const std::vector<BenchReport>& reports);
std::string format_key_values(const std::vector<BenchReport>& reports);

}  // namespace nacrf

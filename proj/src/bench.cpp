#include "nacrf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "nacrf/align.hpp"
#include "nacrf/encoder.hpp"

namespace nacrf {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void summarize(BenchReport& r, std::vector<double> times) {
  std::sort(times.begin(), times.end());
  r.samples = times.size();
  r.mean_ms = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
  const std::size_t n = times.size();
  r.median_ms = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  r.p95_ms = times[std::min(n - 1, static_cast<std::size_t>(0.95 * static_cast<double>(n)))];
}

}  // namespace

std::vector<BenchReport> bench_decoders(const Corrector& model, const std::vector<IdSeq>& inputs,
                                        const BenchOptions& options) {
  if (inputs.size() < kMinBenchSamples) {
    throw std::invalid_argument("bench needs at least " + std::to_string(kMinBenchSamples) + " samples");
  }
  if (options.repetitions < 1) throw std::invalid_argument("bench needs at least one repetition");
  const auto& params = model.params();
  const auto& config = model.config();
  std::vector<EmissionMatrix<float>> emissions;
  emissions.reserve(inputs.size());
  for (const auto& ids : inputs) {
    const std::size_t margin = options.mask_margin.value_or(default_mask_margin(ids.size() - 1));
    emissions.push_back(forward_emissions<float>(with_mask_margin(ids, margin), params, config));
  }
  const Mat<float>& dense = model.dense_transition_matrix();

  std::vector<IdSeq> exact_paths(inputs.size());
  for (int w = 0; w < options.warmup; ++w) {
    viterbi_dense(emissions[static_cast<std::size_t>(w) % emissions.size()], params.crf, dense);
  }
  BenchReport exact;
  exact.decoder = "exact";
  std::vector<double> times;
  for (int rep = 0; rep < options.repetitions; ++rep) {
    double total = 0;
    for (std::size_t i = 0; i < emissions.size(); ++i) {
      const auto start = Clock::now();
      auto decoded = viterbi_dense(emissions[i], params.crf, dense);
      const double ms = elapsed_ms(start);
      times.push_back(ms);
      total += ms;
      exact_paths[i] = std::move(decoded.labels);
    }
    exact.repetition_mean_ms.push_back(total / static_cast<double>(emissions.size()));
  }
  summarize(exact, std::move(times));

  std::vector<BenchReport> reports{exact};
  for (int k_req : options.k_values) {
    const int k = std::clamp(k_req, 1, config.vocab_size);
    BenchReport r;
    r.decoder = "beam-k" + std::to_string(k);
    r.k = k;
    for (int w = 0; w < options.warmup; ++w) {
      const auto& e = emissions[static_cast<std::size_t>(w) % emissions.size()];
      viterbi_beamed(e, params.crf, build_lattice<float>(e, k));
    }
    std::vector<double> beam_times;
    std::size_t agree = 0;
    for (int rep = 0; rep < options.repetitions; ++rep) {
      double total = 0;
      for (std::size_t i = 0; i < emissions.size(); ++i) {
        const auto start = Clock::now();
        const auto lattice = build_lattice<float>(emissions[i], k);
        auto decoded = viterbi_beamed(emissions[i], params.crf, lattice);
        const double ms = elapsed_ms(start);
        beam_times.push_back(ms);
        total += ms;
        if (rep == 0 && decoded.labels == exact_paths[i]) ++agree;
      }
      r.repetition_mean_ms.push_back(total / static_cast<double>(emissions.size()));
    }
    r.agreement = static_cast<double>(agree) / static_cast<double>(emissions.size());
    summarize(r, std::move(beam_times));
    reports.push_back(r);
  }
  return reports;
}

namespace {

std::string num(double v, const char* fmt = "%.4f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

std::string format_table(const std::vector<BenchReport>& reports) {
  std::ostringstream out;
  out << "decoder      mean_ms    median_ms  p95_ms     samples  agreement  rep_means_ms\n";
  for (const auto& r : reports) {
    char line[160];
    std::snprintf(line, sizeof line, "%-12s %-10.4f %-10.4f %-10.4f %-8zu %-10.4f ", r.decoder.c_str(), r.mean_ms,
                  r.median_ms, r.p95_ms, r.samples, r.agreement);
    out << line;
    for (std::size_t i = 0; i < r.repetition_mean_ms.size(); ++i) {
      out << (i ? "," : "") << num(r.repetition_mean_ms[i]);
    }
    out << '\n';
  }
  return out.str();
}

std::string format_key_values(const std::vector<BenchReport>& reports) {
  std::ostringstream out;
  for (const auto& r : reports) {
    const std::string p = r.decoder + ".";
    out << p << "mean_ms=" << num(r.mean_ms) << '\n'
        << p << "median_ms=" << num(r.median_ms) << '\n'
        << p << "p95_ms=" << num(r.p95_ms) << '\n'
        << p << "samples=" << r.samples << '\n'
        << p << "agreement=" << num(r.agreement) << '\n';
    for (std::size_t i = 0; i < r.repetition_mean_ms.size(); ++i) {
      out << p << "rep" << i << "_mean_ms=" << num(r.repetition_mean_ms[i]) << '\n';
    }
  }
  return out.str();
}

}  // namespace nacrf

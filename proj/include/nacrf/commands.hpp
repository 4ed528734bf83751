#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nacrf/bench.hpp"
#include "nacrf/corrector.hpp"
#include "nacrf/metrics.hpp"
#include "nacrf/trainer.hpp"

namespace nacrf::cli {

/// Input or validation problem; the CLI exits with code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenCorpusArgs {
  std::string input;
  std::string output;
  std::string vocab;
  std::vector<double> mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};  // deletion, insertion, shuffle
  std::uint64_t seed = 0;
  int shuffle_window = 3;
  int min_count = 1;
  int max_len = 126;
  std::string confusion;
};

struct GenCorpusStats {
  std::size_t samples = 0;
  std::size_t skipped = 0;
  std::size_t counts[4] = {0, 0, 0, 0};  // indexed by EditOp
};

GenCorpusStats gen_corpus(const GenCorpusArgs& args);

struct TrainArgs {
  std::string corpus;
  std::string vocab;
  std::string out;
  std::string log;  // default: <out>.log
  std::string resume;
  std::string train_margin = "0";  // "0", an integer, or "auto"
  std::uint64_t checkpoint_every = 0;
  EncoderConfig encoder;
  TrainConfig train;
};

/// Runs (or resumes) training up to `args.train.steps` total steps.
void train(const TrainArgs& args, std::ostream& diag);

struct CorrectArgs {
  std::string ckpt;
  std::string input;
  std::string output;  // empty: the out stream
  DecodeOptions decode;
};

void correct(const CorrectArgs& args, std::ostream& out);

struct EvalArgs {
  std::string ckpt;
  std::string test;
  std::string hyp;          // score these predictions instead of decoding
  std::string predictions;  // optional dump of predicted lines
  std::string format = "table";
  DecodeOptions decode;
};

MetricsReport eval(const EvalArgs& args, std::ostream& out);

struct BenchArgs {
  std::string ckpt;
  std::string test;
  std::size_t max_samples = 0;  // 0: all
  std::string format = "table";
  BenchOptions bench;
};

std::vector<BenchReport> bench(const BenchArgs& args, std::ostream& out);

/// Key/value echo of every training setting, written next to the checkpoint.
std::map<std::string, std::string> run_manifest(const TrainArgs& args);

}  // namespace nacrf::cli

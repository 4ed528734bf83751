#include "nacrf/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "nacrf/align.hpp"
#include "nacrf/checkpoint.hpp"
#include "nacrf/config_file.hpp"
#include "nacrf/corruption.hpp"
#include "nacrf/metrics.hpp"
#include "nacrf/tsv.hpp"
#include "nacrf/unicode.hpp"

namespace nacrf::cli {
namespace {

std::string fmt(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string full_precision(double v) { return fmt(v, "%.17g"); }

}  // namespace

GenCorpusStats gen_corpus(const GenCorpusArgs& args) {
  if (args.mix.size() != 3) throw UsageError("--mix takes three probabilities: deletion,insertion,shuffle");
  CorruptionSpec spec;
  spec.p_deletion = args.mix[0];
  spec.p_insertion = args.mix[1];
  spec.p_shuffle = args.mix[2];
  spec.shuffle_window = args.shuffle_window;
  spec.seed = args.seed;
  spec.max_len = args.max_len;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const auto lines = load_lines(args.input);
  if (lines.empty()) throw UsageError("empty corpus");
  Vocab vocab = [&] {
    try {
      return build_vocab(lines, args.min_count);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }();
  std::optional<ConfusionSet> confusion;
  if (!args.confusion.empty()) confusion = load_confusion_set(args.confusion, vocab);

  GenCorpusStats stats;
  std::vector<TextPair> pairs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const IdSeq clean = tokenize(lines[i], vocab);
    if (clean.size() < 3 || static_cast<int>(clean.size()) > args.max_len) {
      ++stats.skipped;
      continue;
    }
    Corruption c;
    try {
      c = corrupt(clean, spec, vocab, i, confusion ? &*confusion : nullptr);
    } catch (const std::invalid_argument&) {
      ++stats.skipped;
      continue;
    }
    ++stats.counts[static_cast<int>(c.op)];
    ++stats.samples;
    pairs.push_back({detokenize(c.ids, vocab), detokenize(clean, vocab), i + 1});
  }
  save_tsv(args.output, pairs);
  vocab.save(args.vocab);

  std::map<std::string, std::string> side{{"samples", std::to_string(stats.samples)},
                                          {"skipped", std::to_string(stats.skipped)},
                                          {"seed", std::to_string(args.seed)}};
  for (EditOp op : kAllEditOps) {
    const auto n = stats.counts[static_cast<int>(op)];
    side[std::string("count.") + std::string(op_name(op))] = std::to_string(n);
    side[std::string("fraction.") + std::string(op_name(op))] =
        fmt(stats.samples ? static_cast<double>(n) / static_cast<double>(stats.samples) : 0.0);
  }
  save_key_values(args.output + ".stats", side);
  return stats;
}

std::map<std::string, std::string> run_manifest(const TrainArgs& args) {
  std::map<std::string, std::string> m = encoder_fields(args.encoder);
  const auto& t = args.train;
  m["gamma"] = full_precision(t.gamma);
  m["k"] = std::to_string(t.beam_k);
  m["dm"] = std::to_string(args.encoder.crf_rank);
  m["lr"] = full_precision(t.adam.learning_rate);
  m["adam_beta1"] = full_precision(t.adam.beta1);
  m["adam_beta2"] = full_precision(t.adam.beta2);
  m["adam_eps"] = full_precision(t.adam.epsilon);
  m["batch_size"] = std::to_string(t.batch_size);
  m["clip"] = full_precision(t.grad_clip_norm);
  m["steps"] = std::to_string(t.steps);
  m["seed"] = std::to_string(t.seed);
  m["ranking"] = to_string(t.ranking);
  m["reduction"] = to_string(t.reduction);
  m["use_dp_loss"] = t.use_dp_loss ? "1" : "0";
  m["use_crf_loss"] = t.use_crf_loss ? "1" : "0";
  m["warmup_steps"] = std::to_string(t.warmup_steps);
  m["linear_decay"] = t.linear_decay ? "1" : "0";
  m["train_margin"] = args.train_margin;
  m["corpus"] = args.corpus;
  return m;
}

void train(const TrainArgs& args, std::ostream& diag) {
  const Vocab vocab = Vocab::load(args.vocab);
  std::optional<Checkpoint> resumed;
  EncoderConfig encoder = args.encoder;
  encoder.vocab_size = static_cast<int>(vocab.size());
  if (!args.resume.empty()) {
    resumed = load_checkpoint(args.resume);
    if (!resumed->optimizer) throw UsageError("checkpoint " + args.resume + " has no optimizer state to resume");
    encoder = resumed->encoder;
  }
  try {
    encoder.validate();
    args.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::optional<std::size_t> fixed_margin;
  bool auto_margin = false;
  if (args.train_margin == "auto") {
    auto_margin = true;
  } else {
    try {
      fixed_margin = static_cast<std::size_t>(std::stoul(args.train_margin));
    } catch (const std::exception&) {
      throw UsageError("--train-margin must be a non-negative integer or 'auto'");
    }
  }

  std::vector<PairedSample> data;
  for (const auto& pair : load_tsv(args.corpus)) {
    const IdSeq src = tokenize(pair.source, vocab);
    const IdSeq tgt = tokenize(pair.target, vocab);
    for (const IdSeq* ids : {&src, &tgt}) {
      for (TokenId id : *ids) {
        if (id >= encoder.vocab_size) {
          throw UsageError(args.corpus + ":" + std::to_string(pair.line) + ": token id " + std::to_string(id) +
                           " outside model vocab of size " + std::to_string(encoder.vocab_size));
        }
      }
    }
    const std::size_t extra = auto_margin ? default_mask_margin(src.size() - 1) : *fixed_margin;
    auto sample = align_pair_with_margin(src, tgt, extra);
    if (static_cast<int>(sample.length()) > encoder.max_positions) {
      throw UsageError(args.corpus + ":" + std::to_string(pair.line) + ": aligned length " +
                       std::to_string(sample.length()) + " exceeds max_positions " +
                       std::to_string(encoder.max_positions));
    }
    data.push_back(std::move(sample));
  }
  if (data.empty()) throw UsageError("empty corpus");

  TrainArgs effective = args;
  effective.encoder = encoder;
  const auto manifest = run_manifest(effective);
  save_key_values(args.out + ".manifest", manifest);

  Trainer trainer(encoder, args.train, std::move(data));
  if (resumed) trainer.restore(resumed->params, *resumed->optimizer, resumed->rng_state);

  const auto save = [&] {
    Checkpoint ck;
    ck.encoder = encoder;
    ck.vocab_tokens = vocab.tokens();
    ck.meta = manifest;
    ck.params = trainer.params();
    ck.optimizer = trainer.optimizer();
    ck.rng_state = trainer.rng_state();
    save_checkpoint(args.out, ck);
  };

  const std::string log_path = args.log.empty() ? args.out + ".log" : args.log;
  std::ofstream log(log_path, resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write loss log " + log_path);
  if (!resumed) log << "step\tl_dp\tl_crf\tl_total\n";

  const char* level = std::getenv("NACRF_LOG");
  const bool quiet = level && std::string(level) == "quiet";
  while (trainer.current_step() < args.train.steps) {
    const LossReport r = trainer.step();
    const auto step = trainer.current_step();
    log << step << '\t' << fmt(r.l_dp) << '\t' << fmt(r.l_crf) << '\t' << fmt(r.l_total) << '\n';
    if (!quiet && (step % 50 == 0 || step == args.train.steps)) {
      diag << "step " << step << " l_dp=" << fmt(r.l_dp, "%.4f") << " l_crf=" << fmt(r.l_crf, "%.4f")
           << " p_crf=" << fmt(r.p_crf, "%.3f") << '\n';
    }
    if (args.checkpoint_every > 0 && step % args.checkpoint_every == 0) save();
  }
  log.flush();
  save();
}

namespace {

std::string source_column(const std::string& line) {
  const auto tab = line.find('\t');
  return tab == std::string::npos ? line : line.substr(0, tab);
}

}  // namespace

void correct(const CorrectArgs& args, std::ostream& out) {
  const Corrector model = Corrector::from_checkpoint(load_checkpoint(args.ckpt));
  std::ifstream in(args.input, std::ios::binary);
  if (!in) throw UsageError("cannot open " + args.input);
  std::ofstream file;
  if (!args.output.empty()) {
    file.open(args.output, std::ios::binary);
    if (!file) throw UsageError("cannot write " + args.output);
  }
  std::ostream& sink = args.output.empty() ? out : file;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    try {
      sink << model.correct(source_column(line), args.decode) << '\n';
    } catch (const std::length_error& e) {
      throw UsageError(args.input + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

MetricsReport eval(const EvalArgs& args, std::ostream& out) {
  const auto pairs = load_tsv(args.test);
  if (pairs.empty()) throw UsageError("empty test set");
  std::vector<std::string> predicted;
  std::vector<IdSeq> preds, srcs, refs;

  if (!args.hyp.empty()) {
    std::ifstream in(args.hyp, std::ios::binary);
    if (!in) throw UsageError("cannot open " + args.hyp);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      predicted.push_back(line);
    }
    if (predicted.size() != pairs.size()) {
      throw UsageError("hypothesis file has " + std::to_string(predicted.size()) + " lines, test set has " +
                       std::to_string(pairs.size()));
    }
    // Character-level ids over everything seen; only equality matters here.
    std::vector<std::string> all;
    for (const auto& p : pairs) {
      all.push_back(p.source);
      all.push_back(p.target);
    }
    all.insert(all.end(), predicted.begin(), predicted.end());
    const Vocab vocab = build_vocab(all, 1);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      srcs.push_back(tokenize(pairs[i].source, vocab));
      refs.push_back(tokenize(pairs[i].target, vocab));
      preds.push_back(tokenize(predicted[i], vocab));
    }
  } else {
    if (args.ckpt.empty()) throw UsageError("eval needs --ckpt or --hyp");
    const Corrector model = Corrector::from_checkpoint(load_checkpoint(args.ckpt));
    for (const auto& p : pairs) {
      const IdSeq src = tokenize(p.source, model.vocab());
      IdSeq pred;
      try {
        pred = model.decode(src, args.decode);
      } catch (const std::length_error& e) {
        throw UsageError(args.test + ":" + std::to_string(p.line) + ": " + e.what());
      }
      predicted.push_back(detokenize(pred, model.vocab()));
      srcs.push_back(src);
      refs.push_back(tokenize(p.target, model.vocab()));
      preds.push_back(std::move(pred));
    }
  }
  if (!args.predictions.empty()) {
    std::ofstream dump(args.predictions, std::ios::binary);
    if (!dump) throw UsageError("cannot write " + args.predictions);
    for (const auto& s : predicted) dump << s << '\n';
  }
  const MetricsReport report = evaluate(preds, srcs, refs);
  out << (args.format == "kv" ? format_key_values(report) : format_table(report));
  return report;
}

std::vector<BenchReport> bench(const BenchArgs& args, std::ostream& out) {
  const Corrector model = Corrector::from_checkpoint(load_checkpoint(args.ckpt));
  std::vector<IdSeq> inputs;
  for (const auto& p : load_tsv(args.test)) {
    if (args.max_samples && inputs.size() >= args.max_samples) break;
    inputs.push_back(tokenize(p.source, model.vocab()));
  }
  if (inputs.size() < kMinBenchSamples) {
    throw UsageError("bench needs at least " + std::to_string(kMinBenchSamples) + " test samples");
  }
  auto reports = bench_decoders(model, inputs, args.bench);
  out << (args.format == "kv" ? format_key_values(reports) : format_table(reports));
  return reports;
}

}  // namespace nacrf::cli

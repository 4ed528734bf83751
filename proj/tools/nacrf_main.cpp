#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nacrf/checkpoint.hpp"
#include "nacrf/commands.hpp"
#include "nacrf/config_file.hpp"
#include "nacrf/corruption.hpp"

using namespace nacrf;

namespace {

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(part);
  return out;
}

void add_decode_flags(CLI::App* cmd, DecodeOptions& d, std::string& mode, std::string& ranking,
                      std::size_t& margin) {
  cmd->add_option("--mode", mode, "crf or direct")->check(CLI::IsMember({"crf", "direct"}));
  cmd->add_option("--k", d.k, "beam size")->check(CLI::PositiveNumber);
  cmd->add_flag("--exact", d.exact, "full Viterbi over the whole vocabulary");
  cmd->add_option("--mask-margin", margin, "number of <mask> slots appended to each input");
  cmd->add_option("--ranking", ranking, "beam ranking: emission or forward")
      ->check(CLI::IsMember({"emission", "forward"}));
}

void finish_decode(DecodeOptions& d, const std::string& mode, const std::string& ranking, CLI::App* cmd,
                   std::size_t margin) {
  d.mode = parse_decode_mode(mode);
  d.ranking = parse_ranking(ranking);
  if (cmd->count("--mask-margin")) d.mask_margin = margin;
}

// Expands `train --config FILE` into `--key value` flags for every key not
// already given on the command line.
std::vector<std::string> with_config_file(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] != "train") return {args.rbegin(), args.rend()};
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path.empty()) {
    for (const auto& [key, value] : load_key_values(path)) {
      const std::string flag = "--" + key;
      const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
        return a == flag || a.rfind(flag + "=", 0) == 0;
      });
      if (!given) {
        args.push_back(flag);
        args.push_back(value);
      }
    }
  }
  // CLI11 takes the arguments in reverse order.
  return {args.rbegin(), args.rend()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-autoregressive text correction with a low-rank CRF"};
  app.require_subcommand(1, 1);
  app.allow_extras(false);

  cli::GenCorpusArgs gen;
  std::string mix_text = "0.333333333333,0.333333333333,0.333333333334";
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Synthesize (corrupted, clean) pairs from clean text");
  gen_cmd->add_option("--input", gen.input, "clean text, one sentence per line")->required();
  gen_cmd->add_option("--output", gen.output, "output TSV")->required();
  gen_cmd->add_option("--vocab", gen.vocab, "output vocabulary file")->required();
  gen_cmd->add_option("--mix", mix_text, "deletion,insertion,shuffle probabilities; the rest substitutes");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--shuffle-window", gen.shuffle_window);
  gen_cmd->add_option("--min-count", gen.min_count);
  gen_cmd->add_option("--max-len", gen.max_len, "longest corrupted sequence, <eos> included");
  gen_cmd->add_option("--confusion", gen.confusion, "substitution candidates per character");

  cli::TrainArgs tr;
  std::string ranking_text = "emission", reduction_text = "mean";
  int dp_loss = 1, crf_loss = 1, linear_decay = 0;
  double clip = tr.train.grad_clip_norm;
  auto* train_cmd = app.add_subcommand("train", "Train or resume a model");
  std::string config_path;
  train_cmd->add_option("--config", config_path, "key=value file; flags on the command line win");
  train_cmd->add_option("--corpus", tr.corpus)->required();
  train_cmd->add_option("--vocab", tr.vocab)->required();
  train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
  train_cmd->add_option("--log", tr.log, "loss log (default <out>.log)");
  train_cmd->add_option("--resume", tr.resume, "checkpoint to continue from");
  train_cmd->add_option("--train-margin", tr.train_margin, "extra <mask> slots per sample: N or auto");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every);
  train_cmd->add_option("--gamma", tr.train.gamma)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--k", tr.train.beam_k)->check(CLI::PositiveNumber);
  train_cmd->add_option("--dm", tr.encoder.crf_rank)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.train.adam.learning_rate);
  train_cmd->add_option("--adam-beta1", tr.train.adam.beta1);
  train_cmd->add_option("--adam-beta2", tr.train.adam.beta2);
  train_cmd->add_option("--adam-eps", tr.train.adam.epsilon);
  train_cmd->add_option("--batch-size", tr.train.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--clip", clip, "global gradient norm limit, 0 disables");
  train_cmd->add_option("--steps", tr.train.steps, "total optimizer steps");
  train_cmd->add_option("--warmup-steps", tr.train.warmup_steps, "linear learning-rate warmup");
  train_cmd->add_option("--linear-decay", linear_decay, "1: decay the learning rate to 0 at --steps")
      ->check(CLI::Range(0, 1));
  train_cmd->add_option("--seed", tr.train.seed);
  train_cmd->add_option("--ranking", ranking_text)->check(CLI::IsMember({"emission", "forward"}));
  train_cmd->add_option("--reduction", reduction_text)->check(CLI::IsMember({"mean", "sum"}));
  train_cmd->add_option("--dp-loss", dp_loss)->check(CLI::Range(0, 1));
  train_cmd->add_option("--crf-loss", crf_loss)->check(CLI::Range(0, 1));
  train_cmd->add_option("--layers", tr.encoder.num_layers);
  train_cmd->add_option("--model-dim", tr.encoder.model_dim);
  train_cmd->add_option("--heads", tr.encoder.num_heads);
  train_cmd->add_option("--ffn-dim", tr.encoder.ffn_dim);
  train_cmd->add_option("--max-positions", tr.encoder.max_positions);
  train_cmd->add_option("--dropout", tr.encoder.dropout_rate);

  cli::CorrectArgs cr;
  std::string cr_mode = "crf", cr_ranking = "emission";
  std::size_t cr_margin = 0;
  auto* correct_cmd = app.add_subcommand("correct", "Correct text line by line");
  correct_cmd->add_option("--ckpt", cr.ckpt)->required();
  correct_cmd->add_option("--input", cr.input, "text or TSV (first column is used)")->required();
  correct_cmd->add_option("--output", cr.output, "default: standard output");
  add_decode_flags(correct_cmd, cr.decode, cr_mode, cr_ranking, cr_margin);

  cli::EvalArgs ev;
  std::string ev_mode = "crf", ev_ranking = "emission";
  std::size_t ev_margin = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Sentence-level detection and correction scores");
  eval_cmd->add_option("--ckpt", ev.ckpt);
  eval_cmd->add_option("--test", ev.test, "TSV of source and reference")->required();
  eval_cmd->add_option("--hyp", ev.hyp, "score these predictions instead of decoding");
  eval_cmd->add_option("--predictions", ev.predictions, "write decoded lines here");
  eval_cmd->add_option("--format", ev.format)->check(CLI::IsMember({"table", "kv"}));
  add_decode_flags(eval_cmd, ev.decode, ev_mode, ev_ranking, ev_margin);

  cli::BenchArgs bn;
  std::string k_list = "64";
  std::size_t bn_margin = 0;
  auto* bench_cmd = app.add_subcommand("bench", "Exact vs beamed Viterbi latency");
  bench_cmd->add_option("--ckpt", bn.ckpt)->required();
  bench_cmd->add_option("--test", bn.test)->required();
  bench_cmd->add_option("--k", k_list, "comma-separated beam sizes");
  bench_cmd->add_option("--max-samples", bn.max_samples);
  bench_cmd->add_option("--repetitions", bn.bench.repetitions)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--warmup", bn.bench.warmup);
  bench_cmd->add_option("--mask-margin", bn_margin);
  bench_cmd->add_option("--format", bn.format)->check(CLI::IsMember({"table", "kv"}));

  std::vector<std::string> args;
  try {
    args = with_config_file(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) {
      const auto parts = split_commas(mix_text);
      gen.mix.clear();
      for (const auto& p : parts) gen.mix.push_back(std::stod(p));
      const auto stats = cli::gen_corpus(gen);
      std::cerr << "wrote " << stats.samples << " pairs, skipped " << stats.skipped << '\n';
    } else if (*train_cmd) {
      tr.train.grad_clip_norm = clip;
      tr.train.ranking = parse_ranking(ranking_text);
      tr.train.reduction = parse_reduction(reduction_text);
      tr.train.use_dp_loss = dp_loss != 0;
      tr.train.use_crf_loss = crf_loss != 0;
      tr.train.linear_decay = linear_decay != 0;
      cli::train(tr, std::cerr);
    } else if (*correct_cmd) {
      finish_decode(cr.decode, cr_mode, cr_ranking, correct_cmd, cr_margin);
      cli::correct(cr, std::cout);
    } else if (*eval_cmd) {
      finish_decode(ev.decode, ev_mode, ev_ranking, eval_cmd, ev_margin);
      cli::eval(ev, std::cout);
    } else if (*bench_cmd) {
      bn.bench.k_values.clear();
      for (const auto& p : split_commas(k_list)) bn.bench.k_values.push_back(std::stoi(p));
      if (bench_cmd->count("--mask-margin")) bn.bench.mask_margin = bn_margin;
      cli::bench(bn, std::cout);
    }
  } catch (const cli::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

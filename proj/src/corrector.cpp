#include "nacrf/corrector.hpp"

#include <algorithm>
#include <stdexcept>

#include "nacrf/align.hpp"
#include "nacrf/encoder.hpp"

namespace nacrf {

DecodeMode parse_decode_mode(const std::string& text) {
  if (text == "crf") return DecodeMode::crf;
  if (text == "direct") return DecodeMode::direct;
  throw std::invalid_argument("unknown decode mode '" + text + "'");
}

Corrector::Corrector(EncoderConfig config, ModelParams<float> params, Vocab vocab)
    : config_(config), params_(std::move(params)), vocab_(std::move(vocab)) {
  config_.validate();
  if (static_cast<int>(vocab_.size()) != config_.vocab_size) {
    throw std::invalid_argument("vocab size differs from model vocab size");
  }
}

Corrector Corrector::from_checkpoint(const Checkpoint& ck) {
  return Corrector(ck.encoder, ck.params, Vocab::from_full_list(ck.vocab_tokens));
}

const Mat<float>& Corrector::dense_transition_matrix() const {
  std::call_once(dense_once_, [this] { dense_ = dense_transitions(params_.crf); });
  return dense_;
}

IdSeq Corrector::decode(const IdSeq& source_ids, const DecodeOptions& options) const {
  const std::size_t content = source_ids.empty() ? 0 : source_ids.size() - 1;
  const std::size_t margin = options.mask_margin.value_or(default_mask_margin(content));
  const IdSeq input = with_mask_margin(source_ids, margin);
  if (static_cast<int>(input.size()) > config_.max_positions) {
    throw std::length_error("input of " + std::to_string(input.size()) + " slots exceeds max_positions " +
                            std::to_string(config_.max_positions));
  }
  const EmissionMatrix<float> emissions = forward_emissions<float>(input, params_, config_);
  if (options.mode == DecodeMode::direct) return direct_predict(emissions);
  if (options.exact) return viterbi_dense(emissions, params_.crf, dense_transition_matrix()).labels;
  const int k = std::clamp(options.k, 1, config_.vocab_size);
  const auto lattice = build_lattice<float>(emissions, params_.crf, k, options.ranking);
  return viterbi_beamed(emissions, params_.crf, lattice).labels;
}

std::string Corrector::correct(std::string_view text, const DecodeOptions& options) const {
  return detokenize(decode(tokenize(text, vocab_), options), vocab_);
}

}  // namespace nacrf

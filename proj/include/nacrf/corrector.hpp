#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "nacrf/checkpoint.hpp"
#include "nacrf/crf.hpp"
#include "nacrf/model.hpp"
#include "nacrf/vocab.hpp"

namespace nacrf {

enum class DecodeMode { crf, direct };

DecodeMode parse_decode_mode(const std::string& text);

struct DecodeOptions {
  DecodeMode mode = DecodeMode::crf;
  int k = 64;
  bool exact = false;  // full |V| Viterbi instead of the beam
  std::optional<std::size_t> mask_margin;  // default: default_mask_margin(T)
  LatticeRanking ranking = LatticeRanking::emission;
};

/// Inference front end over an immutable model; safe to share across threads.
class Corrector {
 public:
  Corrector(EncoderConfig config, ModelParams<float> params, Vocab vocab);
  static Corrector from_checkpoint(const Checkpoint& checkpoint);

  /// Appends the `<mask>` margin to `source_ids` (content + `<eos>`) and
  /// decodes one label per slot.
  [[nodiscard]] IdSeq decode(const IdSeq& source_ids, const DecodeOptions& options) const;
  [[nodiscard]] std::string correct(std::string_view text, const DecodeOptions& options) const;

  [[nodiscard]] const Vocab& vocab() const { return vocab_; }
  [[nodiscard]] const EncoderConfig& config() const { return config_; }
  [[nodiscard]] const ModelParams<float>& params() const { return params_; }
  /// M = E1 E2^T, built on first use.
  [[nodiscard]] const Mat<float>& dense_transition_matrix() const;

 private:
  EncoderConfig config_;
  ModelParams<float> params_;
  Vocab vocab_;
  mutable std::once_flag dense_once_;
  mutable Mat<float> dense_;
};

}  // namespace nacrf

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nacrf/adam.hpp"
#include "nacrf/align.hpp"
#include "nacrf/crf.hpp"
#include "nacrf/encoder.hpp"
#include "nacrf/model.hpp"

namespace nacrf {

enum class LossReduction {
  mean,  // token loss / batch tokens, sequence loss / batch samples
  sum,
};

struct TrainConfig {
  double gamma = 0.5;
  AdamConfig adam{};
  int batch_size = 32;
  double grad_clip_norm = 1.0;  // <= 0 disables clipping
  std::uint64_t steps = 1000;
  std::uint64_t seed = 1;
  int beam_k = 64;
  LatticeRanking ranking = LatticeRanking::emission;
  LossReduction reduction = LossReduction::mean;
  bool use_dp_loss = true;
  bool use_crf_loss = true;
  std::uint64_t warmup_steps = 0;  // linear ramp from 0 to adam.learning_rate
  bool linear_decay = false;       // then linearly down to 0 at `steps`

  void validate() const;
  /// Learning rate applied at (0-based) step `step`.
  [[nodiscard]] double learning_rate_at(std::uint64_t step) const;
};

struct LossReport {
  double l_dp = 0;
  double l_crf = 0;
  double l_total = 0;
  double p_crf = 0;      // mean exp(-nll_crf) over the batch
  double nll_dp = 0;     // unweighted counterparts, same reduction
  double nll_crf = 0;
  double grad_norm = 0;  // before clipping
  std::size_t tokens_counted = 0;

  friend bool operator==(const LossReport&, const LossReport&) = default;
};

/// Raised when a sample produces a non-finite loss; the step is abandoned.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t sample, const std::string& what)
      : std::runtime_error(what), sample_index(sample) {}
  std::size_t sample_index;
};

/// Loss and gradients of one batch without touching the parameters. The
/// gradient tensors in `grads` are overwritten. One dropout seed per sample is
/// drawn from `rng` in batch order.
template <typename S>
LossReport accumulate_batch(std::span<const PairedSample> batch, const ModelParams<S>& params,
                            const EncoderConfig& encoder, const TrainConfig& config, std::mt19937_64& rng,
                            ModelParams<S>& grads, Mode mode = Mode::train);

/// accumulate_batch, optional global-norm clipping, then one Adam update.
template <typename S>
LossReport train_step(std::span<const PairedSample> batch, ModelParams<S>& params, AdamState<S>& optimizer,
                      const EncoderConfig& encoder, const TrainConfig& config, std::mt19937_64& rng);

/// Owns the parameters, optimizer and data stream of one training run. The
/// batch used at a given step depends only on (seed, step), so a run resumed
/// from a checkpoint replays the same stream as an uninterrupted one.
class Trainer {
 public:
  Trainer(EncoderConfig encoder, TrainConfig config, std::vector<PairedSample> data);

  /// Replaces the freshly initialized state (resume).
  void restore(ModelParams<float> params, AdamState<float> optimizer, const std::string& rng_state);

  LossReport step();
  [[nodiscard]] std::vector<std::size_t> batch_indices(std::uint64_t step) const;

  [[nodiscard]] std::uint64_t current_step() const { return optimizer_.step; }
  [[nodiscard]] const ModelParams<float>& params() const { return params_; }
  [[nodiscard]] const AdamState<float>& optimizer() const { return optimizer_; }
  [[nodiscard]] const EncoderConfig& encoder_config() const { return encoder_; }
  [[nodiscard]] const TrainConfig& train_config() const { return config_; }
  [[nodiscard]] std::string rng_state() const;

 private:
  EncoderConfig encoder_;
  TrainConfig config_;
  std::vector<PairedSample> data_;
  ModelParams<float> params_;
  AdamState<float> optimizer_;
  std::mt19937_64 rng_;
  mutable std::uint64_t cached_epoch_ = UINT64_MAX;
  mutable std::vector<std::size_t> order_;
};

std::string to_string(LatticeRanking ranking);
LatticeRanking parse_ranking(const std::string& text);
std::string to_string(LossReduction reduction);
LossReduction parse_reduction(const std::string& text);

}  // namespace nacrf

#include "nacrf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nacrf/encoder.hpp"
#include "nacrf/losses.hpp"
#include "nacrf/rng.hpp"

namespace nacrf {

void TrainConfig::validate() const {
  if (!(gamma >= 0)) throw std::invalid_argument("gamma must be >= 0");
  if (!(adam.learning_rate >= 0)) throw std::invalid_argument("learning rate must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (beam_k < 1) throw std::invalid_argument("beam size k must be >= 1");
  if (!use_dp_loss && !use_crf_loss) throw std::invalid_argument("at least one loss term must be enabled");
}

template <typename S>
LossReport accumulate_batch(std::span<const PairedSample> batch, const ModelParams<S>& params,
                            const EncoderConfig& encoder, const TrainConfig& config, std::mt19937_64& rng,
                            ModelParams<S>& grads, Mode mode) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  grads.set_zero();
  std::vector<std::uint64_t> seeds(batch.size());
  for (auto& s : seeds) s = rng();

  std::size_t tokens = 0;
  for (const auto& s : batch) tokens += s.length();
  const bool mean = config.reduction == LossReduction::mean;
  const S token_scale = mean ? static_cast<S>(1.0 / static_cast<double>(tokens)) : S(1);
  const S sample_scale = mean ? static_cast<S>(1.0 / static_cast<double>(batch.size())) : S(1);
  const S gamma = static_cast<S>(config.gamma);
  const int k = std::min(config.beam_k, encoder.vocab_size);

  LossReport report;
  report.tokens_counted = tokens;
  ForwardCache<S> cache;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& sample = batch[i];
    if (sample.source_ids.size() != sample.target_ids.size()) {
      throw std::invalid_argument("sample " + std::to_string(i) + " is not aligned");
    }
    std::mt19937_64 sample_rng(seeds[i]);
    const EmissionMatrix<S> emissions =
        forward_emissions<S>(sample.source_ids, params, encoder, mode, &sample_rng, &cache);
    EmissionMatrix<S> d_emissions = EmissionMatrix<S>::Zero(emissions.rows(), emissions.cols());

    if (config.use_dp_loss) {
      const auto dp = loss_dp<S>(emissions, sample.target_ids, gamma);
      const auto plain = gamma == 0 ? dp.value : loss_dp<S>(emissions, sample.target_ids, S(0)).value;
      if (!std::isfinite(static_cast<double>(dp.value))) {
        throw NonFiniteLoss(i, "non-finite token loss at batch sample " + std::to_string(i));
      }
      report.l_dp += static_cast<double>(dp.value) * static_cast<double>(token_scale);
      report.nll_dp += static_cast<double>(plain) * static_cast<double>(token_scale);
      d_emissions += dp.d_emissions * token_scale;
    }
    if (config.use_crf_loss) {
      const Lattice<S> lattice =
          build_lattice<S>(emissions, params.crf, k, config.ranking, std::span<const TokenId>(sample.target_ids));
      const auto cg = crf_grad<S>(emissions, params.crf, sample.target_ids, lattice);
      if (!std::isfinite(static_cast<double>(cg.nll))) {
        throw NonFiniteLoss(i, "non-finite CRF loss at batch sample " + std::to_string(i));
      }
      const auto focal = loss_crf<S>(cg.nll, gamma);
      report.l_crf += static_cast<double>(focal.value) * static_cast<double>(sample_scale);
      report.nll_crf += static_cast<double>(cg.nll) * static_cast<double>(sample_scale);
      report.p_crf += static_cast<double>(focal.prob) / static_cast<double>(batch.size());
      const S w = focal.multiplier * sample_scale;
      d_emissions += cg.d_emissions * w;
      grads.crf.e1 += cg.d_e1 * w;
      grads.crf.e2 += cg.d_e2 * w;
    }
    encoder_backward<S>(cache, params, encoder, d_emissions, grads);
  }
  report.l_total = report.l_dp + report.l_crf;
  report.grad_norm = global_norm(grads);
  return report;
}

template <typename S>
LossReport train_step(std::span<const PairedSample> batch, ModelParams<S>& params, AdamState<S>& optimizer,
                      const EncoderConfig& encoder, const TrainConfig& config, std::mt19937_64& rng) {
  ModelParams<S> grads = zero_params<S>(encoder);
  LossReport report = accumulate_batch<S>(batch, params, encoder, config, rng, grads);
  if (!std::isfinite(report.grad_norm)) throw NonFiniteLoss(0, "non-finite gradient norm");
  if (config.grad_clip_norm > 0) clip_global_norm(grads, config.grad_clip_norm);
  adam_update(params, grads, optimizer, config.adam);
  return report;
}

Trainer::Trainer(EncoderConfig encoder, TrainConfig config, std::vector<PairedSample> data)
    : encoder_(encoder),
      config_(config),
      data_(std::move(data)),
      params_(init_params<float>(encoder, config.seed)),
      optimizer_(make_adam_state<float>(encoder)),
      rng_(splitmix64(config.seed ^ 0x5EEDF00DULL)) {
  encoder_.validate();
  config_.validate();
  if (data_.empty()) throw std::invalid_argument("training data is empty");
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (static_cast<int>(data_[i].length()) > encoder_.max_positions) {
      throw std::invalid_argument("training sample " + std::to_string(i) + " longer than max_positions");
    }
  }
}

void Trainer::restore(ModelParams<float> params, AdamState<float> optimizer, const std::string& rng_state) {
  params_ = std::move(params);
  optimizer_ = std::move(optimizer);
  std::istringstream in(rng_state);
  in >> rng_;
  if (!in) throw std::invalid_argument("malformed rng state");
}

std::string Trainer::rng_state() const {
  std::ostringstream out;
  out << rng_;
  return out.str();
}

std::vector<std::size_t> Trainer::batch_indices(std::uint64_t step) const {
  const std::uint64_t n = data_.size();
  const auto b = static_cast<std::uint64_t>(config_.batch_size);
  std::vector<std::size_t> idx;
  idx.reserve(b);
  for (std::uint64_t i = 0; i < b; ++i) {
    const std::uint64_t pos = step * b + i;
    const std::uint64_t epoch = pos / n;
    if (epoch != cached_epoch_) {
      order_.resize(n);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      auto rng = derive_rng(config_.seed ^ 0xDA7AULL, epoch);
      for (std::uint64_t j = n - 1; j > 0; --j) {
        std::swap(order_[j], order_[uniform_index(rng, j + 1)]);
      }
      cached_epoch_ = epoch;
    }
    idx.push_back(order_[pos % n]);
  }
  return idx;
}

double TrainConfig::learning_rate_at(std::uint64_t step) const {
  double lr = adam.learning_rate;
  if (warmup_steps > 0 && step < warmup_steps) {
    lr *= static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  } else if (linear_decay && steps > warmup_steps) {
    const double done = static_cast<double>(step - warmup_steps) / static_cast<double>(steps - warmup_steps);
    lr *= std::max(0.0, 1.0 - done);
  }
  return lr;
}

LossReport Trainer::step() {
  std::vector<PairedSample> batch;
  for (std::size_t i : batch_indices(optimizer_.step)) batch.push_back(data_[i]);
  TrainConfig scheduled = config_;
  scheduled.adam.learning_rate = config_.learning_rate_at(optimizer_.step);
  return train_step<float>(batch, params_, optimizer_, encoder_, scheduled, rng_);
}

std::string to_string(LatticeRanking ranking) {
  return ranking == LatticeRanking::emission ? "emission" : "forward";
}

LatticeRanking parse_ranking(const std::string& text) {
  if (text == "emission") return LatticeRanking::emission;
  if (text == "forward") return LatticeRanking::forward;
  throw std::invalid_argument("unknown lattice ranking '" + text + "'");
}

std::string to_string(LossReduction reduction) { return reduction == LossReduction::mean ? "mean" : "sum"; }

LossReduction parse_reduction(const std::string& text) {
  if (text == "mean") return LossReduction::mean;
  if (text == "sum") return LossReduction::sum;
  throw std::invalid_argument("unknown loss reduction '" + text + "'");
}

template LossReport accumulate_batch<float>(std::span<const PairedSample>, const ModelParams<float>&,
                                            const EncoderConfig&, const TrainConfig&, std::mt19937_64&,
                                            ModelParams<float>&, Mode);
template LossReport accumulate_batch<double>(std::span<const PairedSample>, const ModelParams<double>&,
                                             const EncoderConfig&, const TrainConfig&, std::mt19937_64&,
                                             ModelParams<double>&, Mode);
template LossReport train_step<float>(std::span<const PairedSample>, ModelParams<float>&, AdamState<float>&,
                                      const EncoderConfig&, const TrainConfig&, std::mt19937_64&);
template LossReport train_step<double>(std::span<const PairedSample>, ModelParams<double>&, AdamState<double>&,
                                       const EncoderConfig&, const TrainConfig&, std::mt19937_64&);

}  // namespace nacrf

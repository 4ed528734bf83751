#pragma once

#include <cstdint>

#include "nacrf/model.hpp"

namespace nacrf {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename S>
struct AdamState {
  ModelParams<S> m;
  ModelParams<S> v;
  std::uint64_t step = 0;
};

template <typename S>
AdamState<S> make_adam_state(const EncoderConfig& config);

/// One bias-corrected Adam update of `params` from `grads`.
template <typename S>
void adam_update(ModelParams<S>& params, const ModelParams<S>& grads, AdamState<S>& state, const AdamConfig& config);

/// Global L2 norm over every gradient tensor.
template <typename S>
double global_norm(const ModelParams<S>& grads);

/// Scales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
template <typename S>
double clip_global_norm(ModelParams<S>& grads, double max_norm);

}  // namespace nacrf

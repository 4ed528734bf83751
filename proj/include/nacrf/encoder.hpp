#pragma once

#include <random>
#include <span>
#include <vector>

#include "nacrf/model.hpp"
#include "nacrf/tensor.hpp"

namespace nacrf {

enum class Mode { train, infer };

inline constexpr double kLayerNormEps = 1e-6;

/// Activations one post-LN block keeps for the backward pass.
template <typename S>
struct LayerCache {
  Mat<S> input;
  Mat<S> q, k, v;
  std::vector<Mat<S>> attn;       // per head, softmax output [T x T]
  std::vector<Mat<S>> attn_keep;  // per head dropout scale (0 or 1/(1-p)); empty when off
  Mat<S> context;
  Mat<S> ln1_xhat;
  Vec<S> ln1_rstd;
  Mat<S> h1;
  Mat<S> ffn_pre, ffn_act;
  Mat<S> ffn_keep;
  Mat<S> ln2_xhat;
  Vec<S> ln2_rstd;
};

template <typename S>
struct ForwardCache {
  IdSeq ids;
  std::vector<LayerCache<S>> layers;
  Mat<S> hidden;  // final H^L
  bool valid = false;
};

/// H0[t] = word_embed[id_t] + pos_embed[t].
template <typename S>
Mat<S> embed(std::span<const TokenId> ids, const ModelParams<S>& params, const EncoderConfig& config);

/// Runs all blocks over the full sequence (no causal or padding mask).
/// Dropout on attention weights and FFN output is active only in train mode
/// and draws from `rng`. Fills `cache` when given.
template <typename S>
Mat<S> encode(std::span<const TokenId> ids, const ModelParams<S>& params, const EncoderConfig& config,
              Mode mode = Mode::infer, std::mt19937_64* rng = nullptr, ForwardCache<S>* cache = nullptr);

/// s_t = h_t W_s + b_s for every row.
template <typename S>
EmissionMatrix<S> project_emissions(const Mat<S>& hidden, const ModelParams<S>& params);

/// encode + project_emissions.
template <typename S>
EmissionMatrix<S> forward_emissions(std::span<const TokenId> ids, const ModelParams<S>& params,
                                    const EncoderConfig& config, Mode mode = Mode::infer,
                                    std::mt19937_64* rng = nullptr, ForwardCache<S>* cache = nullptr);

/// Row-wise argmax, lowest id on ties.
template <typename S>
IdSeq direct_predict(const EmissionMatrix<S>& emissions);

/// Accumulates d(loss)/d(param) into `grads` for every encoder tensor and the
/// output projection, given d(loss)/d(emissions). Dropout masks recorded in
/// `cache` are replayed.
template <typename S>
void encoder_backward(const ForwardCache<S>& cache, const ModelParams<S>& params, const EncoderConfig& config,
                      const EmissionMatrix<S>& d_emissions, ModelParams<S>& grads);

/// Row-normalizes x in place; returns the reciprocal std per row.
template <typename S>
Vec<S> layer_norm_rows(Mat<S>& x);

}  // namespace nacrf

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nacrf/tensor.hpp"

namespace nacrf {

struct EncoderConfig {
  int num_layers = 2;
  int model_dim = 64;
  int num_heads = 4;
  int ffn_dim = 256;
  int max_positions = 128;
  double dropout_rate = 0.1;
  int vocab_size = 0;
  int crf_rank = 32;  // d_m of the low-rank transition factors

  void validate() const;
  [[nodiscard]] int head_dim() const { return model_dim / num_heads; }
};

/// Low-rank transition factors: t(i, j) = row_i(E1) . row_j(E2).
template <typename S>
struct CrfTransitions {
  Mat<S> e1;  // [|V| x d_m]
  Mat<S> e2;  // [|V| x d_m]

  [[nodiscard]] int num_labels() const { return static_cast<int>(e1.rows()); }
  [[nodiscard]] int rank() const { return static_cast<int>(e1.cols()); }
  [[nodiscard]] S score(TokenId from, TokenId to) const { return e1.row(from).dot(e2.row(to)); }
};

template <typename S>
struct LayerParams {
  Mat<S> wq, wk, wv, wo;  // [d x d]
  Mat<S> bq, bk, bv, bo;  // [1 x d]
  Mat<S> ln1_gain, ln1_bias;
  Mat<S> ffn_w1, ffn_b1;  // [d x f], [1 x f]
  Mat<S> ffn_w2, ffn_b2;  // [f x d], [1 x d]
  Mat<S> ln2_gain, ln2_bias;

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + "attn.wq", wq);
    f(prefix + "attn.bq", bq);
    f(prefix + "attn.wk", wk);
    f(prefix + "attn.bk", bk);
    f(prefix + "attn.wv", wv);
    f(prefix + "attn.bv", bv);
    f(prefix + "attn.wo", wo);
    f(prefix + "attn.bo", bo);
    f(prefix + "ln1.gain", ln1_gain);
    f(prefix + "ln1.bias", ln1_bias);
    f(prefix + "ffn.w1", ffn_w1);
    f(prefix + "ffn.b1", ffn_b1);
    f(prefix + "ffn.w2", ffn_w2);
    f(prefix + "ffn.b2", ffn_b2);
    f(prefix + "ln2.gain", ln2_gain);
    f(prefix + "ln2.bias", ln2_bias);
  }
};

/// Every learnable tensor, addressable by a unique name. The same type holds
/// gradients and optimizer moments.
template <typename S>
struct ModelParams {
  Mat<S> word_embed;  // [|V| x d]
  Mat<S> pos_embed;   // [max_positions x d]
  std::vector<LayerParams<S>> layers;
  Mat<S> out_w;  // [d x |V|]
  Mat<S> out_b;  // [1 x |V|]
  CrfTransitions<S> crf;

  /// Visits (name, tensor) in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    f(std::string("embed.word"), word_embed);
    f(std::string("embed.pos"), pos_embed);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].for_each("layer." + std::to_string(l) + ".", f);
    }
    f(std::string("out.w"), out_w);
    f(std::string("out.b"), out_b);
    f(std::string("crf.E1"), crf.e1);
    f(std::string("crf.E2"), crf.e2);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each(
        [&](const std::string& name, Mat<S>& t) { f(name, static_cast<const Mat<S>&>(t)); });
  }

  [[nodiscard]] std::size_t num_scalars() const;
  [[nodiscard]] bool all_finite() const;
  void set_zero();
};

/// Zero-filled tensors with the shapes `config` implies.
template <typename S>
ModelParams<S> zero_params(const EncoderConfig& config);

/// Truncated normal (std 0.02, cut at 2 std) weights, zero biases, unit
/// layernorm gains.
template <typename S>
ModelParams<S> init_params(const EncoderConfig& config, std::uint64_t seed);

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p);

}  // namespace nacrf

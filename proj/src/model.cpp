#include "nacrf/model.hpp"

#include <cmath>
#include <stdexcept>

#include "nacrf/rng.hpp"

namespace nacrf {

void EncoderConfig::validate() const {
  if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  if (num_heads < 1 || model_dim < 1 || model_dim % num_heads != 0) {
    throw std::invalid_argument("model_dim must be a positive multiple of num_heads");
  }
  if (ffn_dim < 1) throw std::invalid_argument("ffn_dim must be >= 1");
  if (max_positions < 1) throw std::invalid_argument("max_positions must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate must lie in [0,1)");
  if (vocab_size < 5) throw std::invalid_argument("vocab_size must be >= 5");
  if (crf_rank < 1) throw std::invalid_argument("crf rank d_m must be >= 1");
}

template <typename S>
std::size_t ModelParams<S>::num_scalars() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Mat<S>& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

template <typename S>
bool ModelParams<S>::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Mat<S>& t) { ok = ok && t.allFinite(); });
  return ok;
}

template <typename S>
void ModelParams<S>::set_zero() {
  for_each([](const std::string&, Mat<S>& t) { t.setZero(); });
}

template <typename S>
ModelParams<S> zero_params(const EncoderConfig& c) {
  c.validate();
  const int d = c.model_dim, f = c.ffn_dim, v = c.vocab_size;
  ModelParams<S> p;
  p.word_embed = Mat<S>::Zero(v, d);
  p.pos_embed = Mat<S>::Zero(c.max_positions, d);
  p.layers.resize(static_cast<std::size_t>(c.num_layers));
  for (auto& l : p.layers) {
    l.wq = l.wk = l.wv = l.wo = Mat<S>::Zero(d, d);
    l.bq = l.bk = l.bv = l.bo = Mat<S>::Zero(1, d);
    l.ln1_gain = l.ln1_bias = l.ln2_gain = l.ln2_bias = Mat<S>::Zero(1, d);
    l.ffn_w1 = Mat<S>::Zero(d, f);
    l.ffn_b1 = Mat<S>::Zero(1, f);
    l.ffn_w2 = Mat<S>::Zero(f, d);
    l.ffn_b2 = Mat<S>::Zero(1, d);
  }
  p.out_w = Mat<S>::Zero(d, v);
  p.out_b = Mat<S>::Zero(1, v);
  p.crf.e1 = Mat<S>::Zero(v, c.crf_rank);
  p.crf.e2 = Mat<S>::Zero(v, c.crf_rank);
  return p;
}

namespace {

// Box-Muller normal, redrawn outside two standard deviations.
double truncated_normal(std::mt19937_64& rng) {
  constexpr double kTwoPi = 6.283185307179586476925;
  for (;;) {
    const double u1 = 1.0 - uniform_unit(rng);
    const double u2 = uniform_unit(rng);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    if (std::abs(z) <= 2.0) return z;
  }
}

}  // namespace

template <typename S>
ModelParams<S> init_params(const EncoderConfig& c, std::uint64_t seed) {
  ModelParams<S> p = zero_params<S>(c);
  std::uint64_t tensor_index = 0;
  p.for_each([&](const std::string& name, Mat<S>& t) {
    auto rng = derive_rng(seed, tensor_index++);
    const bool is_gain = name.ends_with(".gain");
    bool is_bias = false;
    for (const char* suffix : {".bias", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2", "out.b"}) {
      is_bias = is_bias || name.ends_with(suffix);
    }
    if (is_gain) {
      t.setOnes();
    } else if (is_bias) {
      t.setZero();
    } else {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(0.02 * truncated_normal(rng));
    }
  });
  return p;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p) {
  ModelParams<To> out;
  out.word_embed = p.word_embed.template cast<To>();
  out.pos_embed = p.pos_embed.template cast<To>();
  out.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& a = p.layers[l];
    auto& b = out.layers[l];
    b.wq = a.wq.template cast<To>();
    b.wk = a.wk.template cast<To>();
    b.wv = a.wv.template cast<To>();
    b.wo = a.wo.template cast<To>();
    b.bq = a.bq.template cast<To>();
    b.bk = a.bk.template cast<To>();
    b.bv = a.bv.template cast<To>();
    b.bo = a.bo.template cast<To>();
    b.ln1_gain = a.ln1_gain.template cast<To>();
    b.ln1_bias = a.ln1_bias.template cast<To>();
    b.ffn_w1 = a.ffn_w1.template cast<To>();
    b.ffn_b1 = a.ffn_b1.template cast<To>();
    b.ffn_w2 = a.ffn_w2.template cast<To>();
    b.ffn_b2 = a.ffn_b2.template cast<To>();
    b.ln2_gain = a.ln2_gain.template cast<To>();
    b.ln2_bias = a.ln2_bias.template cast<To>();
  }
  out.out_w = p.out_w.template cast<To>();
  out.out_b = p.out_b.template cast<To>();
  out.crf.e1 = p.crf.e1.template cast<To>();
  out.crf.e2 = p.crf.e2.template cast<To>();
  return out;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> zero_params<float>(const EncoderConfig&);
template ModelParams<double> zero_params<double>(const EncoderConfig&);
template ModelParams<float> init_params<float>(const EncoderConfig&, std::uint64_t);
template ModelParams<double> init_params<double>(const EncoderConfig&, std::uint64_t);
template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);

}  // namespace nacrf

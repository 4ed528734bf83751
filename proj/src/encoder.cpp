#include "nacrf/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "nacrf/rng.hpp"

namespace nacrf {
namespace {

template <typename S>
S gelu(S x) {
  return static_cast<S>(0.5) * x * (static_cast<S>(1) + std::erf(x * static_cast<S>(M_SQRT1_2)));
}

template <typename S>
S gelu_grad(S x) {
  const S cdf = static_cast<S>(0.5) * (static_cast<S>(1) + std::erf(x * static_cast<S>(M_SQRT1_2)));
  const S pdf = std::exp(static_cast<S>(-0.5) * x * x) * static_cast<S>(0.3989422804014327);
  return cdf + x * pdf;
}

template <typename S>
void softmax_rows(Mat<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const S hi = row.maxCoeff();
    row = (row.array() - hi).exp();
    row /= row.sum();
  }
}

template <typename S>
Mat<S> dropout_keep(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
  Mat<S> keep(rows, cols);
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < keep.size(); ++i) {
    keep.data()[i] = uniform_unit(rng) < rate ? S(0) : scale;
  }
  return keep;
}

template <typename S>
void check_ids(std::span<const TokenId> ids, const EncoderConfig& config) {
  if (ids.empty()) throw std::invalid_argument("empty input sequence");
  if (static_cast<int>(ids.size()) > config.max_positions) {
    throw std::invalid_argument("sequence length " + std::to_string(ids.size()) + " exceeds max_positions " +
                                std::to_string(config.max_positions));
  }
  for (TokenId id : ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw std::invalid_argument("token id " + std::to_string(id) + " outside vocab of size " +
                                  std::to_string(config.vocab_size));
    }
  }
}

// LayerNorm backward: returns dL/dx given dL/dy, caching xhat and 1/std.
template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& rstd, const Mat<S>& gain,
                           Mat<S>& d_gain, Mat<S>& d_bias) {
  d_gain += (dy.array() * xhat.array()).colwise().sum().matrix();
  d_bias += dy.colwise().sum();
  Mat<S> dxhat = dy.array().rowwise() * gain.row(0).array();
  const S inv_n = static_cast<S>(1) / static_cast<S>(dy.cols());
  Mat<S> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const S mean_d = dxhat.row(r).sum() * inv_n;
    const S mean_dx = dxhat.row(r).dot(xhat.row(r)) * inv_n;
    dx.row(r) = rstd(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

}  // namespace

template <typename S>
Vec<S> layer_norm_rows(Mat<S>& x) {
  Vec<S> rstd(x.rows());
  const S inv_n = static_cast<S>(1) / static_cast<S>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const S mean = row.sum() * inv_n;
    row.array() -= mean;
    const S var = row.squaredNorm() * inv_n;
    rstd(r) = static_cast<S>(1) / std::sqrt(var + static_cast<S>(kLayerNormEps));
    row *= rstd(r);
  }
  return rstd;
}

template <typename S>
Mat<S> embed(std::span<const TokenId> ids, const ModelParams<S>& params, const EncoderConfig& config) {
  check_ids<S>(ids, config);
  const auto t_len = static_cast<Eigen::Index>(ids.size());
  Mat<S> h(t_len, config.model_dim);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    h.row(t) = params.word_embed.row(ids[static_cast<std::size_t>(t)]) + params.pos_embed.row(t);
  }
  return h;
}

template <typename S>
Mat<S> encode(std::span<const TokenId> ids, const ModelParams<S>& params, const EncoderConfig& config, Mode mode,
              std::mt19937_64* rng, ForwardCache<S>* cache) {
  const bool dropout = mode == Mode::train && config.dropout_rate > 0.0;
  if (dropout && rng == nullptr) throw std::invalid_argument("train-mode dropout needs an rng");
  Mat<S> x = embed(ids, params, config);
  const Eigen::Index t_len = x.rows();
  const int heads = config.num_heads;
  const int dh = config.head_dim();
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  if (cache) {
    cache->ids.assign(ids.begin(), ids.end());
    cache->layers.assign(params.layers.size(), LayerCache<S>{});
    cache->valid = false;
  }

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& p = params.layers[l];
    LayerCache<S> local;
    LayerCache<S>& c = cache ? cache->layers[l] : local;
    c.input = x;
    c.q = (x * p.wq).rowwise() + p.bq.row(0);
    c.k = (x * p.wk).rowwise() + p.bk.row(0);
    c.v = (x * p.wv).rowwise() + p.bv.row(0);
    c.context.resize(t_len, config.model_dim);
    c.attn.resize(static_cast<std::size_t>(heads));
    c.attn_keep.clear();
    for (int h = 0; h < heads; ++h) {
      Mat<S>& a = c.attn[static_cast<std::size_t>(h)];
      a.noalias() = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose();
      a *= scale;
      softmax_rows(a);
      if (dropout) {
        c.attn_keep.push_back(dropout_keep<S>(t_len, t_len, config.dropout_rate, *rng));
        c.context.middleCols(h * dh, dh).noalias() =
            (a.array() * c.attn_keep.back().array()).matrix() * c.v.middleCols(h * dh, dh);
      } else {
        c.context.middleCols(h * dh, dh).noalias() = a * c.v.middleCols(h * dh, dh);
      }
    }
    Mat<S> r1 = x;
    r1.noalias() += c.context * p.wo;
    r1.rowwise() += p.bo.row(0);
    c.ln1_rstd = layer_norm_rows(r1);
    c.ln1_xhat = r1;
    c.h1 = (r1.array().rowwise() * p.ln1_gain.row(0).array()).rowwise() + p.ln1_bias.row(0).array();

    c.ffn_pre = (c.h1 * p.ffn_w1).rowwise() + p.ffn_b1.row(0);
    c.ffn_act = c.ffn_pre.unaryExpr([](S v) { return gelu(v); });
    Mat<S> ffn_out = (c.ffn_act * p.ffn_w2).rowwise() + p.ffn_b2.row(0);
    if (dropout) {
      c.ffn_keep = dropout_keep<S>(t_len, config.model_dim, config.dropout_rate, *rng);
      ffn_out.array() *= c.ffn_keep.array();
    } else {
      c.ffn_keep.resize(0, 0);
    }
    Mat<S> r2 = c.h1 + ffn_out;
    c.ln2_rstd = layer_norm_rows(r2);
    c.ln2_xhat = r2;
    x = (r2.array().rowwise() * p.ln2_gain.row(0).array()).rowwise() + p.ln2_bias.row(0).array();
    if (!x.allFinite()) throw std::runtime_error("non-finite activation in encoder layer " + std::to_string(l));
  }
  if (cache) {
    cache->hidden = x;
    cache->valid = true;
  }
  return x;
}

template <typename S>
EmissionMatrix<S> project_emissions(const Mat<S>& hidden, const ModelParams<S>& params) {
  EmissionMatrix<S> e = hidden * params.out_w;
  e.rowwise() += params.out_b.row(0);
  return e;
}

template <typename S>
EmissionMatrix<S> forward_emissions(std::span<const TokenId> ids, const ModelParams<S>& params,
                                    const EncoderConfig& config, Mode mode, std::mt19937_64* rng,
                                    ForwardCache<S>* cache) {
  return project_emissions(encode(ids, params, config, mode, rng, cache), params);
}

template <typename S>
IdSeq direct_predict(const EmissionMatrix<S>& emissions) {
  IdSeq out(static_cast<std::size_t>(emissions.rows()));
  for (Eigen::Index t = 0; t < emissions.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < emissions.cols(); ++j) {
      if (emissions(t, j) > emissions(t, best)) best = j;
    }
    out[static_cast<std::size_t>(t)] = static_cast<TokenId>(best);
  }
  return out;
}

template <typename S>
void encoder_backward(const ForwardCache<S>& cache, const ModelParams<S>& params, const EncoderConfig& config,
                      const EmissionMatrix<S>& d_emissions, ModelParams<S>& grads) {
  if (!cache.valid) throw std::logic_error("encoder_backward called without a forward cache");
  if (d_emissions.rows() != cache.hidden.rows() || d_emissions.cols() != params.out_w.cols()) {
    throw std::invalid_argument("upstream gradient shape does not match emissions");
  }
  const int heads = config.num_heads;
  const int dh = config.head_dim();
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  grads.out_w.noalias() += cache.hidden.transpose() * d_emissions;
  grads.out_b += d_emissions.colwise().sum();
  Mat<S> dx = d_emissions * params.out_w.transpose();

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& p = params.layers[li];
    auto& g = grads.layers[li];
    const auto& c = cache.layers[li];

    // out = LN2(h1 + dropout(FFN(h1)))
    Mat<S> d_r2 = layer_norm_backward<S>(dx, c.ln2_xhat, c.ln2_rstd, p.ln2_gain, g.ln2_gain, g.ln2_bias);
    Mat<S> d_ffn_out = d_r2;
    if (c.ffn_keep.size() > 0) d_ffn_out.array() *= c.ffn_keep.array();
    g.ffn_w2.noalias() += c.ffn_act.transpose() * d_ffn_out;
    g.ffn_b2 += d_ffn_out.colwise().sum();
    Mat<S> d_pre = d_ffn_out * p.ffn_w2.transpose();
    d_pre.array() *= c.ffn_pre.unaryExpr([](S v) { return gelu_grad(v); }).array();
    g.ffn_w1.noalias() += c.h1.transpose() * d_pre;
    g.ffn_b1 += d_pre.colwise().sum();
    Mat<S> d_h1 = d_r2;
    d_h1.noalias() += d_pre * p.ffn_w1.transpose();

    // h1 = LN1(x + Attn(x))
    Mat<S> d_r1 = layer_norm_backward<S>(d_h1, c.ln1_xhat, c.ln1_rstd, p.ln1_gain, g.ln1_gain, g.ln1_bias);
    g.wo.noalias() += c.context.transpose() * d_r1;
    g.bo += d_r1.colwise().sum();
    Mat<S> d_ctx = d_r1 * p.wo.transpose();
    Mat<S> dq(c.q.rows(), c.q.cols()), dk(c.k.rows(), c.k.cols()), dv(c.v.rows(), c.v.cols());
    for (int h = 0; h < heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      const Mat<S>& a = c.attn[hs];
      const auto d_ctx_h = d_ctx.middleCols(h * dh, dh);
      Mat<S> d_a = d_ctx_h * c.v.middleCols(h * dh, dh).transpose();
      if (!c.attn_keep.empty()) {
        d_a.array() *= c.attn_keep[hs].array();
        dv.middleCols(h * dh, dh).noalias() = (a.array() * c.attn_keep[hs].array()).matrix().transpose() * d_ctx_h;
      } else {
        dv.middleCols(h * dh, dh).noalias() = a.transpose() * d_ctx_h;
      }
      // softmax backward
      Vec<S> row_dot = (d_a.array() * a.array()).rowwise().sum();
      Mat<S> d_s = a.array() * (d_a.array().colwise() - row_dot.array());
      d_s *= scale;
      dq.middleCols(h * dh, dh).noalias() = d_s * c.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = d_s.transpose() * c.q.middleCols(h * dh, dh);
    }
    g.wq.noalias() += c.input.transpose() * dq;
    g.wk.noalias() += c.input.transpose() * dk;
    g.wv.noalias() += c.input.transpose() * dv;
    g.bq += dq.colwise().sum();
    g.bk += dk.colwise().sum();
    g.bv += dv.colwise().sum();
    dx = d_r1;
    dx.noalias() += dq * p.wq.transpose();
    dx.noalias() += dk * p.wk.transpose();
    dx.noalias() += dv * p.wv.transpose();
  }

  for (std::size_t t = 0; t < cache.ids.size(); ++t) {
    grads.word_embed.row(cache.ids[t]) += dx.row(static_cast<Eigen::Index>(t));
    grads.pos_embed.row(static_cast<Eigen::Index>(t)) += dx.row(static_cast<Eigen::Index>(t));
  }
}

#define NACRF_INSTANTIATE(S)                                                                                    \
  template Vec<S> layer_norm_rows<S>(Mat<S>&);                                                                  \
  template Mat<S> embed<S>(std::span<const TokenId>, const ModelParams<S>&, const EncoderConfig&);             \
  template Mat<S> encode<S>(std::span<const TokenId>, const ModelParams<S>&, const EncoderConfig&, Mode,       \
                            std::mt19937_64*, ForwardCache<S>*);                                                \
  template EmissionMatrix<S> project_emissions<S>(const Mat<S>&, const ModelParams<S>&);                        \
  template EmissionMatrix<S> forward_emissions<S>(std::span<const TokenId>, const ModelParams<S>&,             \
                                                  const EncoderConfig&, Mode, std::mt19937_64*,                 \
                                                  ForwardCache<S>*);                                            \
  template IdSeq direct_predict<S>(const EmissionMatrix<S>&);                                                   \
  template void encoder_backward<S>(const ForwardCache<S>&, const ModelParams<S>&, const EncoderConfig&,        \
                                    const EmissionMatrix<S>&, ModelParams<S>&);

NACRF_INSTANTIATE(float)
NACRF_INSTANTIATE(double)
#undef NACRF_INSTANTIATE

}  // namespace nacrf

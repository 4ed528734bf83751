#include <cmath>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "nacrf/encoder.hpp"
#include "test_util.hpp"

using namespace nacrf;

namespace {

using Rows = std::vector<std::vector<double>>;

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.num_layers = 2;
  c.model_dim = 8;
  c.num_heads = 2;
  c.ffn_dim = 12;
  c.max_positions = 10;
  c.vocab_size = 11;
  c.crf_rank = 4;
  c.dropout_rate = 0.0;
  return c;
}

ModelParams<double> random_params(const EncoderConfig& c, std::uint64_t seed, double scale = 0.5) {
  ModelParams<double> p = zero_params<double>(c);
  std::mt19937_64 rng(seed);
  p.for_each([&](const std::string& name, Mat<double>& t) {
    t = test_util::random_matrix<double>(t.rows(), t.cols(), rng, scale);
    if (name.find("gain") != std::string::npos) t.array() += 1.0;
  });
  return p;
}

Rows to_rows(const Mat<double>& m) {
  Rows r(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

Rows matmul(const Rows& a, const Mat<double>& b, const Mat<double>& bias) {
  Rows out(a.size(), std::vector<double>(static_cast<std::size_t>(b.cols())));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double s = bias(0, j);
      for (std::size_t k = 0; k < a[i].size(); ++k) s += a[i][k] * b(static_cast<Eigen::Index>(k), j);
      out[i][j] = s;
    }
  return out;
}

Rows layer_norm(const Rows& x, const Mat<double>& gain, const Mat<double>& bias) {
  Rows out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mean = 0, var = 0;
    for (double v : x[i]) mean += v;
    mean /= static_cast<double>(x[i].size());
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x[i].size());
    for (std::size_t j = 0; j < x[i].size(); ++j)
      out[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-6) * gain(0, j) + bias(0, j);
  }
  return out;
}

// Plain-loop post-LN encoder for comparison.
Rows reference_encode(const IdSeq& ids, const ModelParams<double>& p, const EncoderConfig& c) {
  const std::size_t T = ids.size(), d = static_cast<std::size_t>(c.model_dim);
  const std::size_t dh = d / static_cast<std::size_t>(c.num_heads);
  Rows x(T, std::vector<double>(d));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < d; ++j) x[t][j] = p.word_embed(ids[t], j) + p.pos_embed(t, j);
  for (const auto& L : p.layers) {
    const Rows q = matmul(x, L.wq, L.bq), k = matmul(x, L.wk, L.bk), v = matmul(x, L.wv, L.bv);
    Rows ctx(T, std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < static_cast<std::size_t>(c.num_heads); ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        std::vector<double> w(T);
        double hi = -1e300, z = 0;
        for (std::size_t j = 0; j < T; ++j) {
          double s = 0;
          for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) s += q[i][e] * k[j][e];
          w[j] = s / std::sqrt(static_cast<double>(dh));
          hi = std::max(hi, w[j]);
        }
        for (double& wj : w) z += (wj = std::exp(wj - hi));
        for (std::size_t j = 0; j < T; ++j)
          for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) ctx[i][e] += w[j] / z * v[j][e];
      }
    }
    Rows r1 = matmul(ctx, L.wo, L.bo);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < d; ++j) r1[t][j] += x[t][j];
    const Rows h1 = layer_norm(r1, L.ln1_gain, L.ln1_bias);
    Rows f = matmul(h1, L.ffn_w1, L.ffn_b1);
    for (auto& row : f)
      for (double& a : row) a = 0.5 * a * (1.0 + std::erf(a / std::sqrt(2.0)));
    Rows r2 = matmul(f, L.ffn_w2, L.ffn_b2);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < d; ++j) r2[t][j] += h1[t][j];
    x = layer_norm(r2, L.ln2_gain, L.ln2_bias);
  }
  return x;
}

double weighted_sum(const EmissionMatrix<double>& e, const EmissionMatrix<double>& w) {
  return (e.array() * w.array()).sum();
}

}  // namespace

TEST(Embed, ZeroEmbeddings) {
  const auto c = tiny_config();
  const auto p = zero_params<double>(c);
  EXPECT_TRUE(embed(IdSeq{4, 5, 2}, p, c).isZero());
}

TEST(Embed, OneHotWordRows) {
  auto c = tiny_config();
  c.vocab_size = 8;
  auto p = zero_params<double>(c);
  for (int i = 0; i < 8; ++i) p.word_embed(i, i) = 3.0;
  const Mat<double> h = embed(IdSeq{5, 1, 7}, p, c);
  EXPECT_EQ(h.row(0), p.word_embed.row(5));
  EXPECT_EQ(h.row(1), p.word_embed.row(1));
  EXPECT_EQ(h.row(2), p.word_embed.row(7));
}

TEST(Embed, MatchesScalarSum) {
  const auto c = tiny_config();
  const auto p = random_params(c, 3);
  const IdSeq ids{4, 9, 0, 2};
  const Mat<double> h = embed(ids, p, c);
  for (int t = 0; t < 4; ++t)
    for (int j = 0; j < c.model_dim; ++j) EXPECT_DOUBLE_EQ(h(t, j), p.word_embed(ids[t], j) + p.pos_embed(t, j));
}

TEST(Embed, RejectsBadInput) {
  const auto c = tiny_config();
  const auto p = zero_params<double>(c);
  EXPECT_THROW(embed(IdSeq{11}, p, c), std::invalid_argument);
  EXPECT_THROW(embed(IdSeq(11, 4), p, c), std::invalid_argument);
  EXPECT_THROW(embed(IdSeq{}, p, c), std::invalid_argument);
}

TEST(Encode, MatchesReferenceImplementation) {
  const auto c = tiny_config();
  const auto p = random_params(c, 17);
  const IdSeq ids{4, 9, 0, 2, 7};
  const Mat<double> h = encode(ids, p, c);
  const Rows ref = reference_encode(ids, p, c);
  for (std::size_t t = 0; t < ids.size(); ++t)
    for (int j = 0; j < c.model_dim; ++j) EXPECT_NEAR(h(static_cast<Eigen::Index>(t), j), ref[t][j], 1e-10);
}

TEST(Encode, SinglePositionAttentionIsOne) {
  const auto c = tiny_config();
  const auto p = random_params(c, 2);
  ForwardCache<double> cache;
  const Mat<double> h = encode(IdSeq{5}, p, c, Mode::infer, nullptr, &cache);
  EXPECT_TRUE(h.allFinite());
  for (const auto& a : cache.layers[0].attn) EXPECT_DOUBLE_EQ(a(0, 0), 1.0);
}

TEST(Encode, AttentionRowsSumToOne) {
  const auto c = tiny_config();
  const auto p = random_params(c, 4);
  ForwardCache<double> cache;
  encode(IdSeq{4, 5, 6, 7, 2}, p, c, Mode::infer, nullptr, &cache);
  for (const auto& layer : cache.layers)
    for (const auto& a : layer.attn)
      for (Eigen::Index r = 0; r < a.rows(); ++r) EXPECT_NEAR(a.row(r).sum(), 1.0, 1e-12);
}

TEST(LayerNorm, UnitMoments) {
  std::mt19937_64 rng(1);
  Mat<double> x = test_util::random_matrix<double>(6, 16, rng, 5.0);
  layer_norm_rows(x);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    EXPECT_NEAR(x.row(r).mean(), 0.0, 1e-5);
    EXPECT_NEAR(x.row(r).squaredNorm() / 16.0, 1.0, 1e-5);
  }
}

TEST(Encode, PermutationEquivariance) {
  const auto c = tiny_config();
  auto p = random_params(c, 21);
  const IdSeq ids{4, 9, 6, 2};
  const Mat<double> h = encode(ids, p, c);
  IdSeq swapped = ids;
  std::swap(swapped[0], swapped[2]);
  p.pos_embed.row(0).swap(p.pos_embed.row(2));
  const Mat<double> hs = encode(swapped, p, c);
  EXPECT_TRUE(hs.row(0).isApprox(h.row(2), 1e-12));
  EXPECT_TRUE(hs.row(2).isApprox(h.row(0), 1e-12));
  EXPECT_TRUE(hs.row(1).isApprox(h.row(1), 1e-12));
}

TEST(Encode, InferenceDeterministic) {
  auto c = tiny_config();
  c.dropout_rate = 0.3;
  const auto p = cast_params<float>(random_params(c, 8));
  const IdSeq ids{4, 5, 6};
  const Mat<float> a = encode(ids, p, c);
  const Mat<float> b = encode(ids, p, c);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())), 0);
}

TEST(Encode, TrainModeNeedsRng) {
  auto c = tiny_config();
  c.dropout_rate = 0.1;
  const auto p = random_params(c, 8);
  EXPECT_THROW(encode(IdSeq{4}, p, c, Mode::train), std::invalid_argument);
}

TEST(ProjectEmissions, ConstantBias) {
  const auto c = tiny_config();
  auto p = zero_params<double>(c);
  p.out_b.setConstant(2.5);
  std::mt19937_64 rng(1);
  const auto e = project_emissions(test_util::random_matrix<double>(3, c.model_dim, rng), p);
  EXPECT_TRUE((e.array() == 2.5).all());
}

TEST(ProjectEmissions, HandSizedProduct) {
  ModelParams<double> p;
  p.out_w.resize(2, 3);
  p.out_w << 1, 2, 3, 4, 5, 6;
  p.out_b.resize(1, 3);
  p.out_b << 0.5, -1, 0;
  Mat<double> h(1, 2);
  h << 2, -1;
  const auto e = project_emissions(h, p);
  EXPECT_DOUBLE_EQ(e(0, 0), 2 * 1 - 1 * 4 + 0.5);
  EXPECT_DOUBLE_EQ(e(0, 1), 2 * 2 - 1 * 5 - 1);
  EXPECT_DOUBLE_EQ(e(0, 2), 2 * 3 - 1 * 6);
}

TEST(ProjectEmissions, SoftmaxSumsToOne) {
  const auto c = tiny_config();
  const auto p = cast_params<float>(random_params(c, 31, 2.0));
  const auto e = forward_emissions(IdSeq{4, 5, 6}, p, c);
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    const float lse = log_sum_exp<float>(e.row(r));
    EXPECT_NEAR((e.row(r).array() - lse).exp().sum(), 1.0f, 1e-6f);
  }
}

TEST(DirectPredict, Cases) {
  EXPECT_EQ(direct_predict(EmissionMatrix<double>(EmissionMatrix<double>::Zero(3, 5))), (IdSeq{0, 0, 0}));
  EmissionMatrix<double> e = EmissionMatrix<double>::Zero(1, 10);
  e(0, 7) = 1;
  EXPECT_EQ(direct_predict(e), IdSeq{7});
  std::mt19937_64 rng(4);
  const auto r = test_util::random_matrix<double>(5, 10, rng);
  const IdSeq got = direct_predict(r);
  for (Eigen::Index t = 0; t < 5; ++t) {
    TokenId best = 0;
    for (TokenId j = 1; j < 10; ++j)
      if (r(t, j) > r(t, best)) best = j;
    EXPECT_EQ(got[static_cast<std::size_t>(t)], best);
  }
}

TEST(EncoderBackward, ZeroUpstreamGivesZeroGradients) {
  const auto c = tiny_config();
  const auto p = random_params(c, 5);
  ForwardCache<double> cache;
  const auto e = forward_emissions(IdSeq{4, 5, 6}, p, c, Mode::infer, nullptr, &cache);
  auto g = zero_params<double>(c);
  encoder_backward(cache, p, c, EmissionMatrix<double>(EmissionMatrix<double>::Zero(e.rows(), e.cols())), g);
  g.for_each([](const std::string& name, const Mat<double>& t) { EXPECT_TRUE(t.isZero()) << name; });
}

TEST(EncoderBackward, OutputBiasIsColumnSum) {
  const auto c = tiny_config();
  const auto p = random_params(c, 5);
  ForwardCache<double> cache;
  const auto e = forward_emissions(IdSeq{4, 5, 6}, p, c, Mode::infer, nullptr, &cache);
  std::mt19937_64 rng(3);
  const auto up = test_util::random_matrix<double>(e.rows(), e.cols(), rng);
  auto g = zero_params<double>(c);
  encoder_backward(cache, p, c, up, g);
  EXPECT_TRUE(g.out_b.row(0).isApprox(up.colwise().sum(), 1e-12));
}

class EncoderGradient : public ::testing::TestWithParam<double> {};

TEST_P(EncoderGradient, MatchesFiniteDifferences) {
  auto c = tiny_config();
  c.dropout_rate = GetParam();
  const auto p = random_params(c, 13);
  const IdSeq ids{4, 9, 6, 2, 3};
  std::mt19937_64 wrng(99);
  const auto w = test_util::random_matrix<double>(5, c.vocab_size, wrng);

  const auto loss = [&](const ModelParams<double>& params) {
    std::mt19937_64 drop(123);
    return weighted_sum(forward_emissions(ids, params, c, Mode::train, &drop), w);
  };
  ForwardCache<double> cache;
  std::mt19937_64 drop(123);
  forward_emissions(ids, p, c, Mode::train, &drop, &cache);
  auto g = zero_params<double>(c);
  encoder_backward(cache, p, c, w, g);

  std::vector<std::pair<std::string, Eigen::Index>> picks;
  std::mt19937_64 pick(7);
  std::vector<std::string> names;
  p.for_each([&](const std::string& name, const Mat<double>&) {
    // Key biases cancel in the softmax: their gradient is identically zero.
    if (name.rfind("crf.", 0) != 0 && name.find("attn.bk") == std::string::npos) names.push_back(name);
  });
  for (int i = 0; i < 20; ++i) {
    const auto& name = names[pick() % names.size()];
    Eigen::Index size = 0;
    p.for_each([&](const std::string& n, const Mat<double>& t) {
      if (n == name) size = t.size();
    });
    picks.emplace_back(name, static_cast<Eigen::Index>(pick() % static_cast<std::uint64_t>(size)));
  }
  for (const auto& [name, idx] : picks) {
    const double h = 1e-4;
    auto plus = p, minus = p;
    double analytic = 0;
    plus.for_each([&](const std::string& n, Mat<double>& t) {
      if (n == name) t.data()[idx] += h;
    });
    minus.for_each([&](const std::string& n, Mat<double>& t) {
      if (n == name) t.data()[idx] -= h;
    });
    g.for_each([&](const std::string& n, const Mat<double>& t) {
      if (n == name) analytic = t.data()[idx];
    });
    const double numeric = (loss(plus) - loss(minus)) / (2 * h);
    EXPECT_LT(std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8), 1e-3)
        << name << "[" << idx << "] analytic " << analytic << " numeric " << numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(Dropout, EncoderGradient, ::testing::Values(0.0, 0.2));

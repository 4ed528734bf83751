#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "nacrf/crf.hpp"
#include "nacrf/encoder.hpp"
#include "test_util.hpp"

using namespace nacrf;

namespace {

struct Instance {
  EmissionMatrix<double> emissions;
  CrfTransitions<double> trans;
};

Instance random_instance(int labels, int t_len, std::uint64_t seed, int rank = 3) {
  std::mt19937_64 rng(seed);
  return {test_util::random_matrix<double>(t_len, labels, rng, 1.5), test_util::random_transitions<double>(labels, rank, rng)};
}

// Explicit M and explicit path enumeration.
double explicit_score(const Instance& in, const IdSeq& path) {
  const Mat<double> m = in.trans.e1 * in.trans.e2.transpose();
  double s = 0;
  for (std::size_t t = 0; t < path.size(); ++t) {
    s += in.emissions(static_cast<Eigen::Index>(t), path[t]);
    if (t > 0) s += m(path[t - 1], path[t]);
  }
  return s;
}

void for_each_path(int labels, int t_len, const std::function<void(const IdSeq&)>& f) {
  IdSeq path(static_cast<std::size_t>(t_len), 0);
  while (true) {
    f(path);
    int t = t_len - 1;
    while (t >= 0 && ++path[static_cast<std::size_t>(t)] == labels) path[static_cast<std::size_t>(t--)] = 0;
    if (t < 0) return;
  }
}

double enumerated_log_norm(const Instance& in) {
  std::vector<double> scores;
  for_each_path(static_cast<int>(in.emissions.cols()), static_cast<int>(in.emissions.rows()),
                [&](const IdSeq& p) { scores.push_back(explicit_score(in, p)); });
  return log_sum_exp<double>(std::span<const double>(scores));
}

Decoded<double> enumerated_argmax(const Instance& in) {
  Decoded<double> best{{}, -1e300};
  for_each_path(static_cast<int>(in.emissions.cols()), static_cast<int>(in.emissions.rows()), [&](const IdSeq& p) {
    const double s = explicit_score(in, p);
    if (s > best.score) best = {p, s};
  });
  return best;
}

}  // namespace

TEST(SequenceScore, SinglePosition) {
  const auto in = random_instance(4, 1, 1);
  EXPECT_DOUBLE_EQ(sequence_score(in.emissions, in.trans, IdSeq{2}), in.emissions(0, 2));
}

TEST(SequenceScore, ZeroE1IsEmissionSum) {
  auto in = random_instance(4, 3, 2);
  in.trans.e1.setZero();
  EXPECT_DOUBLE_EQ(sequence_score(in.emissions, in.trans, IdSeq{1, 3, 0}),
                   in.emissions(0, 1) + in.emissions(1, 3) + in.emissions(2, 0));
}

TEST(SequenceScore, MatchesExplicitMatrix) {
  const auto in = random_instance(4, 3, 3);
  const IdSeq path{3, 0, 2};
  EXPECT_NEAR(sequence_score(in.emissions, in.trans, path), explicit_score(in, path), 1e-12);
}

TEST(LogNormExact, SinglePosition) {
  const auto in = random_instance(5, 1, 4);
  EXPECT_NEAR(log_norm_exact(in.emissions, in.trans), log_sum_exp<double>(in.emissions.row(0)), 1e-12);
}

TEST(LogNormExact, UniformLatticeCountsPaths) {
  Instance in{EmissionMatrix<double>::Zero(2, 3), {Mat<double>::Zero(3, 2), Mat<double>::Zero(3, 2)}};
  EXPECT_NEAR(log_norm_exact(in.emissions, in.trans), std::log(9.0), 1e-12);
}

TEST(LogNormExact, MatchesAllPathsT3) {
  const auto in = random_instance(5, 3, 5);
  EXPECT_NEAR(log_norm_exact(in.emissions, in.trans), enumerated_log_norm(in), 1e-9);
}

TEST(LogNormExact, DenseAgrees) {
  const auto in = random_instance(7, 6, 6);
  EXPECT_NEAR(log_norm_dense(in.emissions, dense_transitions(in.trans)), log_norm_exact(in.emissions, in.trans),
              1e-12);
}

TEST(BuildLattice, FullVocabulary) {
  const auto in = random_instance(6, 3, 7);
  const auto lat = build_lattice(in.emissions, 6);
  for (const auto& step : lat.steps) EXPECT_EQ(step.size(), 6u);
}

TEST(BuildLattice, KOneIsArgmax) {
  const auto in = random_instance(6, 4, 8);
  const auto lat = build_lattice(in.emissions, 1);
  for (std::size_t t = 0; t < 4; ++t) {
    Eigen::Index best;
    in.emissions.row(static_cast<Eigen::Index>(t)).maxCoeff(&best);
    EXPECT_EQ(lat.steps[t].labels, IdSeq{static_cast<TokenId>(best)});
  }
}

TEST(BuildLattice, ForcedLabelEvictsKth) {
  EmissionMatrix<double> e(1, 6);
  e << 5, 4, 3, 2, 1, 0;
  const IdSeq forced{5};
  const auto lat = build_lattice(e, 3, forced);
  EXPECT_EQ(lat.steps[0].labels, (IdSeq{0, 1, 5}));
  const auto kept = build_lattice(e, 3, IdSeq{1});
  EXPECT_EQ(kept.steps[0].labels, (IdSeq{0, 1, 2}));
}

TEST(BuildLattice, TiesGoToLowestId) {
  const auto lat = build_lattice(EmissionMatrix<double>(EmissionMatrix<double>::Zero(1, 5)), 2);
  EXPECT_EQ(lat.steps[0].labels, (IdSeq{0, 1}));
}

TEST(BuildLattice, RejectsBadK) {
  const auto in = random_instance(4, 2, 9);
  EXPECT_THROW(build_lattice(in.emissions, 0), std::invalid_argument);
  EXPECT_THROW(build_lattice(in.emissions, 5), std::invalid_argument);
}

TEST(BuildLatticeForward, ContainsForcedAndHasK) {
  const auto in = random_instance(8, 5, 10);
  const IdSeq gold{7, 7, 7, 7, 7};
  const auto lat = build_lattice_forward(in.emissions, in.trans, 3, gold);
  for (const auto& step : lat.steps) {
    EXPECT_EQ(step.size(), 3u);
    EXPECT_GE(step.find(7), 0);
  }
}

TEST(LogNormTruncated, FullKEqualsExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = random_instance(9, 6, 100 + seed);
    EXPECT_NEAR(log_norm_truncated(in.emissions, in.trans, build_lattice(in.emissions, 9)),
                log_norm_exact(in.emissions, in.trans), 1e-9);
  }
}

TEST(LogNormTruncated, KOneIsArgmaxPathScore) {
  const auto in = random_instance(6, 5, 11);
  const auto lat = build_lattice(in.emissions, 1);
  IdSeq path;
  for (const auto& s : lat.steps) path.push_back(s.labels[0]);
  EXPECT_NEAR(log_norm_truncated(in.emissions, in.trans, lat), sequence_score(in.emissions, in.trans, path), 1e-12);
}

TEST(LogNormTruncated, GapShrinksWithK) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = random_instance(50, 8, 200 + seed, 4);
    const double exact = log_norm_exact(in.emissions, in.trans);
    const double z4 = log_norm_truncated(in.emissions, in.trans, build_lattice(in.emissions, 4));
    const double z8 = log_norm_truncated(in.emissions, in.trans, build_lattice(in.emissions, 8));
    EXPECT_LE(z8, exact + 1e-12);
    EXPECT_LT(exact - z8, exact - z4);
  }
}

TEST(ViterbiExact, AllZeroTiesToLowestIds) {
  Instance in{EmissionMatrix<double>::Zero(4, 3), {Mat<double>::Zero(3, 2), Mat<double>::Zero(3, 2)}};
  EXPECT_EQ(viterbi_exact(in.emissions, in.trans).labels, (IdSeq{0, 0, 0, 0}));
}

TEST(ViterbiExact, ZeroTransitionsIsArgmax) {
  auto in = random_instance(6, 5, 12);
  in.trans.e2.setZero();
  EXPECT_EQ(viterbi_exact(in.emissions, in.trans).labels, direct_predict(in.emissions));
}

TEST(ViterbiExact, MatchesAllPathsT4) {
  const auto in = random_instance(5, 4, 13);
  const auto got = viterbi_exact(in.emissions, in.trans);
  const auto want = enumerated_argmax(in);
  EXPECT_EQ(got.labels, want.labels);
  EXPECT_NEAR(got.score, want.score, 1e-9);
}

TEST(ViterbiDense, AgreesWithExact) {
  const auto in = random_instance(12, 7, 14);
  const auto a = viterbi_exact(in.emissions, in.trans);
  const auto b = viterbi_dense(in.emissions, in.trans, dense_transitions(in.trans));
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.score, b.score);
}

TEST(ViterbiBeamed, FullKMatchesExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto in = random_instance(10, 7, 300 + seed);
    const auto a = viterbi_exact(in.emissions, in.trans);
    const auto b = viterbi_beamed(in.emissions, in.trans, build_lattice(in.emissions, 10));
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.score, b.score);
  }
}

TEST(ViterbiBeamed, KOneIsArgmax) {
  const auto in = random_instance(6, 5, 15);
  EXPECT_EQ(viterbi_beamed(in.emissions, in.trans, build_lattice(in.emissions, 1)).labels,
            direct_predict(in.emissions));
}

TEST(ViterbiBeamed, NeverBeatsExact) {
  int agree = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto in = random_instance(50, 8, 400 + seed, 4);
    const auto a = viterbi_exact(in.emissions, in.trans);
    const auto b = viterbi_beamed(in.emissions, in.trans, build_lattice(in.emissions, 16));
    EXPECT_LE(b.score, a.score);
    agree += a.labels == b.labels;
  }
  RecordProperty("agreement", agree);
  EXPECT_GT(agree, 0);
}

TEST(CrfGrad, EmissionRowsSumToZero) {
  const auto in = random_instance(8, 5, 16);
  const IdSeq gold{1, 2, 3, 4, 5};
  const auto g = crf_grad(in.emissions, in.trans, gold, build_lattice(in.emissions, 4, gold));
  for (Eigen::Index t = 0; t < g.d_emissions.rows(); ++t) EXPECT_NEAR(g.d_emissions.row(t).sum(), 0.0, 1e-5);
}

TEST(CrfGrad, NllMatchesDefinition) {
  const auto in = random_instance(8, 5, 17);
  const IdSeq gold{1, 2, 3, 4, 5};
  const auto lat = build_lattice(in.emissions, 4, gold);
  const auto g = crf_grad(in.emissions, in.trans, gold, lat);
  EXPECT_NEAR(g.log_norm, log_norm_truncated(in.emissions, in.trans, lat), 1e-10);
  EXPECT_NEAR(g.nll, g.log_norm - sequence_score(in.emissions, in.trans, gold), 1e-10);
}

TEST(CrfGrad, MatchesFiniteDifferences) {
  const auto in = random_instance(5, 4, 18);
  const IdSeq gold{0, 3, 1, 4};
  const auto lat = build_lattice(in.emissions, 5, gold);
  const auto g = crf_grad(in.emissions, in.trans, gold, lat);
  const auto nll = [&](const EmissionMatrix<double>& e, const CrfTransitions<double>& tr) {
    return log_norm_exact(e, tr) - sequence_score(e, tr, gold);
  };
  const double h = 1e-4;
  const auto check = [](double analytic, double numeric) {
    EXPECT_LT(std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8), 1e-3) << analytic << " vs " << numeric;
  };
  for (Eigen::Index i = 0; i < in.emissions.size(); ++i) {
    auto p = in.emissions, m = in.emissions;
    p.data()[i] += h;
    m.data()[i] -= h;
    check(g.d_emissions.data()[i], (nll(p, in.trans) - nll(m, in.trans)) / (2 * h));
  }
  for (Eigen::Index i = 0; i < in.trans.e1.size(); ++i) {
    auto p = in.trans, m = in.trans;
    p.e1.data()[i] += h;
    m.e1.data()[i] -= h;
    check(g.d_e1.data()[i], (nll(in.emissions, p) - nll(in.emissions, m)) / (2 * h));
    p = in.trans;
    m = in.trans;
    p.e2.data()[i] += h;
    m.e2.data()[i] -= h;
    check(g.d_e2.data()[i], (nll(in.emissions, p) - nll(in.emissions, m)) / (2 * h));
  }
}

TEST(CrfGrad, SaturatedGoldPath) {
  auto in = random_instance(6, 4, 19);
  const IdSeq gold{1, 2, 3, 4};
  for (std::size_t t = 0; t < 4; ++t) in.emissions(static_cast<Eigen::Index>(t), gold[t]) += 60;
  const auto g = crf_grad(in.emissions, in.trans, gold, build_lattice(in.emissions, 3, gold));
  EXPECT_NEAR(g.nll, 0.0, 1e-12);
  EXPECT_LT(g.d_emissions.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(g.d_e1.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CrfGrad, RejectsGoldOutsideLattice) {
  const auto in = random_instance(6, 3, 20);
  EmissionMatrix<double> e = in.emissions;
  e.col(5).setConstant(-100);
  EXPECT_THROW(crf_grad(e, in.trans, IdSeq{5, 5, 5}, build_lattice(e, 2)), std::logic_error);
}

TEST(CrfGrad, FloatAndDoubleAgree) {
  const auto in = random_instance(20, 6, 21);
  const IdSeq gold{1, 2, 3, 4, 5, 6};
  const auto gd = crf_grad(in.emissions, in.trans, gold, build_lattice(in.emissions, 8, gold));
  const EmissionMatrix<float> ef = in.emissions.cast<float>();
  const CrfTransitions<float> tf{in.trans.e1.cast<float>(), in.trans.e2.cast<float>()};
  const auto gf = crf_grad(ef, tf, gold, build_lattice(ef, 8, gold));
  EXPECT_NEAR(gf.nll, gd.nll, 1e-4);
  EXPECT_TRUE(gf.d_e1.cast<double>().isApprox(gd.d_e1, 1e-4));
}

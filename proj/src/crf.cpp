#include "nacrf/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace nacrf {
namespace {

template <typename S>
constexpr S kNegInf = -std::numeric_limits<S>::infinity();

// Dot products of one E1 row `a` with `count` E2 rows stored transposed in
// `cols_t` [n x count]. Every entry is summed in the same order (eight
// interleaved partial sums, fixed combining tree) whatever `count` is, and the
// file is built without FMA contraction, so a transition score does not depend
// on which block it was computed in.
template <typename S>
[[gnu::noinline]] void fixed_order_dots(const S* a, const S* cols_t, int n, int count, S* acc, S* out) {
  std::fill(acc, acc + 8 * count, S(0));
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) {
      const S av = a[i + l];
      const S* bt = cols_t + static_cast<std::ptrdiff_t>(i + l) * count;
      S* ac = acc + l * count;
      for (int b = 0; b < count; ++b) ac[b] += av * bt[b];
    }
  }
  for (int l = 0; i < n; ++i, ++l) {
    const S av = a[i];
    const S* bt = cols_t + static_cast<std::ptrdiff_t>(i) * count;
    S* ac = acc + l * count;
    for (int b = 0; b < count; ++b) ac[b] += av * bt[b];
  }
  for (int b = 0; b < count; ++b) {
    const S* c = acc + b;
    out[b] = ((c[0] + c[4 * count]) + (c[2 * count] + c[6 * count])) +
             ((c[count] + c[5 * count]) + (c[3 * count] + c[7 * count]));
  }
}

template <typename S>
void check_labels(std::span<const TokenId> labels, Eigen::Index num_labels) {
  for (TokenId y : labels) {
    if (y < 0 || y >= num_labels) {
      throw std::out_of_range("label id " + std::to_string(y) + " outside label space of size " +
                              std::to_string(num_labels));
    }
  }
}

template <typename S>
void check_shapes(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans) {
  if (emissions.rows() < 1) throw std::invalid_argument("CRF needs at least one position");
  if (emissions.cols() != trans.e1.rows() || trans.e1.rows() != trans.e2.rows() ||
      trans.e1.cols() != trans.e2.cols()) {
    throw std::invalid_argument("emission and transition shapes disagree");
  }
}

template <typename S>
bool ranks_before(S score_a, TokenId id_a, S score_b, TokenId id_b) {
  return score_a > score_b || (score_a == score_b && id_a < id_b);
}

// Top-k of `scores` (descending, lowest id on ties), with optional forced label.
template <typename S>
std::vector<TokenId> top_k(const Eigen::Ref<const Vec<S>>& scores, int k, int forced) {
  const auto n = static_cast<int>(scores.size());
  std::vector<TokenId> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  const auto cmp = [&](TokenId a, TokenId b) { return ranks_before(scores(a), a, scores(b), b); };
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), cmp);
  ids.resize(static_cast<std::size_t>(k));
  if (forced >= 0 && std::find(ids.begin(), ids.end(), forced) == ids.end()) {
    ids.back() = forced;
  }
  return ids;
}

template <typename S>
LatticeStep<S> make_step(const EmissionMatrix<S>& emissions, Eigen::Index t, std::vector<TokenId> ids) {
  std::sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) {
    return ranks_before(emissions(t, a), a, emissions(t, b), b);
  });
  LatticeStep<S> step;
  step.scores.reserve(ids.size());
  for (TokenId id : ids) step.scores.push_back(emissions(t, id));
  step.labels = std::move(ids);
  return step;
}

template <typename S>
void check_k(int k, Eigen::Index num_labels) {
  if (k < 1 || k > num_labels) {
    throw std::invalid_argument("beam size k=" + std::to_string(k) + " outside [1, " + std::to_string(num_labels) +
                                "]");
  }
}

template <typename S>
void check_lattice(const EmissionMatrix<S>& emissions, const Lattice<S>& lattice) {
  if (static_cast<Eigen::Index>(lattice.length()) != emissions.rows()) {
    throw std::invalid_argument("lattice length differs from emission rows");
  }
  for (const auto& step : lattice.steps) {
    if (step.labels.empty()) throw std::invalid_argument("empty lattice step");
  }
}

}  // namespace

template <typename S>
int LatticeStep<S>::find(TokenId label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return static_cast<int>(i);
  }
  return -1;
}

template <typename S>
S transition_score(const CrfTransitions<S>& trans, TokenId from, TokenId to) {
  const TokenId one[1] = {to};
  return transition_block(trans, std::span<const TokenId>(&from, 1), one)(0, 0);
}

template <typename S>
Mat<S> transition_block(const CrfTransitions<S>& trans, std::span<const TokenId> rows,
                        std::span<const TokenId> cols) {
  const int dm = trans.rank();
  const auto count = static_cast<int>(cols.size());
  Mat<S> cols_t(dm, count);
  for (int b = 0; b < count; ++b) cols_t.col(b) = trans.e2.row(cols[static_cast<std::size_t>(b)]).transpose();
  std::vector<S> acc(8 * static_cast<std::size_t>(count));
  Mat<S> block(static_cast<Eigen::Index>(rows.size()), count);
  for (std::size_t a = 0; a < rows.size(); ++a) {
    fixed_order_dots(trans.e1.row(rows[a]).data(), cols_t.data(), dm, count, acc.data(),
                     block.row(static_cast<Eigen::Index>(a)).data());
  }
  return block;
}

template <typename S>
Mat<S> dense_transitions(const CrfTransitions<S>& trans) {
  std::vector<TokenId> all(static_cast<std::size_t>(trans.num_labels()));
  std::iota(all.begin(), all.end(), 0);
  return transition_block(trans, all, all);
}

template <typename S>
S sequence_score(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans,
                 std::span<const TokenId> labels) {
  check_shapes(emissions, trans);
  if (static_cast<Eigen::Index>(labels.size()) != emissions.rows()) {
    throw std::invalid_argument("label sequence length differs from emission rows");
  }
  check_labels<S>(labels, emissions.cols());
  S score = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    score += emissions(static_cast<Eigen::Index>(t), labels[t]);
    if (t > 0) score += transition_score(trans, labels[t - 1], labels[t]);
  }
  return score;
}

template <typename S>
S log_norm_dense(const EmissionMatrix<S>& emissions, const Mat<S>& dense) {
  const Eigen::Index n = emissions.cols();
  Vec<S> alpha = emissions.row(0).transpose();
  Vec<S> hi(n), acc(n);
  for (Eigen::Index t = 1; t < emissions.rows(); ++t) {
    hi.setConstant(kNegInf<S>);
    for (Eigen::Index i = 0; i < n; ++i) {
      hi = hi.cwiseMax((dense.row(i).transpose().array() + alpha(i)).matrix());
    }
    acc.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      acc.array() += (dense.row(i).transpose().array() + alpha(i) - hi.array()).exp();
    }
    alpha = hi.array() + acc.array().log() + emissions.row(t).transpose().array();
  }
  return log_sum_exp<S>(alpha);
}

template <typename S>
S log_norm_exact(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans) {
  check_shapes(emissions, trans);
  if (emissions.rows() == 1) return log_sum_exp<S>(emissions.row(0));
  return log_norm_dense(emissions, dense_transitions(trans));
}

template <typename S>
Lattice<S> build_lattice(const EmissionMatrix<S>& emissions, int k, std::span<const TokenId> forced) {
  check_k<S>(k, emissions.cols());
  if (!forced.empty()) {
    if (static_cast<Eigen::Index>(forced.size()) != emissions.rows()) {
      throw std::invalid_argument("forced label sequence length differs from emission rows");
    }
    check_labels<S>(forced, emissions.cols());
  }
  Lattice<S> lattice;
  lattice.steps.reserve(static_cast<std::size_t>(emissions.rows()));
  for (Eigen::Index t = 0; t < emissions.rows(); ++t) {
    const int f = forced.empty() ? -1 : forced[static_cast<std::size_t>(t)];
    Vec<S> row = emissions.row(t).transpose();
    lattice.steps.push_back(make_step(emissions, t, top_k<S>(row, k, f)));
  }
  return lattice;
}

template <typename S>
Lattice<S> build_lattice_forward(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans, int k,
                                 std::span<const TokenId> forced) {
  check_shapes(emissions, trans);
  Lattice<S> lattice = build_lattice(emissions, k, forced);
  const Eigen::Index n = emissions.cols();
  std::vector<TokenId> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  Vec<S> alpha = Vec<S>::Map(lattice.steps[0].scores.data(), static_cast<Eigen::Index>(lattice.steps[0].size()));
  for (Eigen::Index t = 1; t < emissions.rows(); ++t) {
    const auto& prev = lattice.steps[static_cast<std::size_t>(t - 1)];
    const Mat<S> block = transition_block<S>(trans, prev.labels, all);
    Vec<S> score(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      score(j) = log_sum_exp<S>(block.col(j) + alpha) + emissions(t, j);
    }
    const int f = forced.empty() ? -1 : forced[static_cast<std::size_t>(t)];
    auto ids = top_k<S>(score, k, f);
    // Keep the forward value of the chosen beam to rank the next step.
    std::vector<std::pair<TokenId, S>> chosen;
    for (TokenId id : ids) chosen.emplace_back(id, score(id));
    lattice.steps[static_cast<std::size_t>(t)] = make_step(emissions, t, std::move(ids));
    const auto& step = lattice.steps[static_cast<std::size_t>(t)];
    alpha.resize(static_cast<Eigen::Index>(step.size()));
    for (std::size_t b = 0; b < step.size(); ++b) {
      for (const auto& [id, v] : chosen) {
        if (id == step.labels[b]) alpha(static_cast<Eigen::Index>(b)) = v;
      }
    }
  }
  return lattice;
}

template <typename S>
S log_norm_truncated(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans, const Lattice<S>& lattice) {
  check_shapes(emissions, trans);
  check_lattice(emissions, lattice);
  const auto& first = lattice.steps[0];
  Vec<S> alpha = Vec<S>::Map(first.scores.data(), static_cast<Eigen::Index>(first.size()));
  for (std::size_t t = 1; t < lattice.length(); ++t) {
    const auto& prev = lattice.steps[t - 1];
    const auto& cur = lattice.steps[t];
    const Mat<S> block = transition_block<S>(trans, prev.labels, cur.labels);
    Vec<S> next(static_cast<Eigen::Index>(cur.size()));
    for (std::size_t b = 0; b < cur.size(); ++b) {
      const auto bi = static_cast<Eigen::Index>(b);
      next(bi) = log_sum_exp<S>(block.col(bi) + alpha) + cur.scores[b];
    }
    alpha = std::move(next);
  }
  return log_sum_exp<S>(alpha);
}

template <typename S>
Decoded<S> viterbi_dense(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans, const Mat<S>& dense) {
  check_shapes(emissions, trans);
  const Eigen::Index n = emissions.cols();
  const Eigen::Index t_len = emissions.rows();
  std::vector<std::vector<TokenId>> back(static_cast<std::size_t>(t_len));
  Vec<S> delta = emissions.row(0).transpose();
  Vec<S> best(n);
  std::vector<TokenId> arg(static_cast<std::size_t>(n));
  for (Eigen::Index t = 1; t < t_len; ++t) {
    best.setConstant(kNegInf<S>);
    std::fill(arg.begin(), arg.end(), 0);
    // Ascending predecessor order with a strict comparison keeps the lowest id on ties.
    for (Eigen::Index i = 0; i < n; ++i) {
      const S di = delta(i);
      const S* row = dense.row(i).data();
      for (Eigen::Index j = 0; j < n; ++j) {
        const S cand = di + row[j];
        if (cand > best(j)) {
          best(j) = cand;
          arg[static_cast<std::size_t>(j)] = static_cast<TokenId>(i);
        }
      }
    }
    for (Eigen::Index j = 0; j < n; ++j) delta(j) = best(j) + emissions(t, j);
    back[static_cast<std::size_t>(t)] = arg;
  }
  Eigen::Index last = 0;
  for (Eigen::Index j = 1; j < n; ++j) {
    if (delta(j) > delta(last)) last = j;
  }
  Decoded<S> out;
  out.labels.resize(static_cast<std::size_t>(t_len));
  out.labels.back() = static_cast<TokenId>(last);
  for (auto t = static_cast<std::size_t>(t_len) - 1; t > 0; --t) {
    out.labels[t - 1] = back[t][static_cast<std::size_t>(out.labels[t])];
  }
  out.score = sequence_score(emissions, trans, out.labels);
  return out;
}

template <typename S>
Decoded<S> viterbi_exact(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans) {
  check_shapes(emissions, trans);
  if (emissions.rows() == 1) return viterbi_dense(emissions, trans, Mat<S>());
  return viterbi_dense(emissions, trans, dense_transitions(trans));
}

template <typename S>
Decoded<S> viterbi_beamed(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans,
                          const Lattice<S>& lattice) {
  check_shapes(emissions, trans);
  check_lattice(emissions, lattice);
  const std::size_t t_len = lattice.length();
  std::vector<std::vector<int>> back(t_len);
  const auto& first = lattice.steps[0];
  std::vector<S> delta(first.scores.begin(), first.scores.end());
  for (std::size_t t = 1; t < t_len; ++t) {
    const auto& prev = lattice.steps[t - 1];
    const auto& cur = lattice.steps[t];
    const Mat<S> block = transition_block<S>(trans, prev.labels, cur.labels);
    std::vector<S> next(cur.size());
    back[t].assign(cur.size(), 0);
    for (std::size_t b = 0; b < cur.size(); ++b) {
      S best = kNegInf<S>;
      int arg = -1;
      for (std::size_t a = 0; a < prev.size(); ++a) {
        const S cand = delta[a] + block(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        if (arg < 0 || cand > best || (cand == best && prev.labels[a] < prev.labels[static_cast<std::size_t>(arg)])) {
          best = cand;
          arg = static_cast<int>(a);
        }
      }
      next[b] = best + cur.scores[b];
      back[t][b] = arg;
    }
    delta = std::move(next);
  }
  const auto& last_step = lattice.steps.back();
  std::size_t last = 0;
  for (std::size_t b = 1; b < last_step.size(); ++b) {
    if (delta[b] > delta[last] || (delta[b] == delta[last] && last_step.labels[b] < last_step.labels[last])) last = b;
  }
  Decoded<S> out;
  out.labels.resize(t_len);
  std::size_t pos = last;
  for (std::size_t t = t_len; t-- > 0;) {
    out.labels[t] = lattice.steps[t].labels[pos];
    if (t > 0) pos = static_cast<std::size_t>(back[t][pos]);
  }
  out.score = sequence_score(emissions, trans, out.labels);
  return out;
}

template <typename S>
CrfGradient<S> crf_grad(const EmissionMatrix<S>& emissions, const CrfTransitions<S>& trans,
                        std::span<const TokenId> gold, const Lattice<S>& lattice) {
  check_shapes(emissions, trans);
  check_lattice(emissions, lattice);
  if (static_cast<Eigen::Index>(gold.size()) != emissions.rows()) {
    throw std::invalid_argument("gold label sequence length differs from emission rows");
  }
  check_labels<S>(gold, emissions.cols());
  const std::size_t t_len = lattice.length();
  std::vector<int> gold_pos(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    gold_pos[t] = lattice.steps[t].find(gold[t]);
    if (gold_pos[t] < 0) {
      throw std::logic_error("gold label missing from lattice at position " + std::to_string(t));
    }
  }

  // Blocks come from a GEMM here; decoders use transition_block instead.
  std::vector<Mat<S>> blocks(t_len), e1_rows(t_len), e2_rows(t_len), probs(t_len);
  std::vector<S> shift(t_len, 0);
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto& step = lattice.steps[t];
    const auto n = static_cast<Eigen::Index>(step.size());
    e1_rows[t].resize(n, trans.e1.cols());
    e2_rows[t].resize(n, trans.e2.cols());
    for (Eigen::Index a = 0; a < n; ++a) {
      e1_rows[t].row(a) = trans.e1.row(step.labels[static_cast<std::size_t>(a)]);
      e2_rows[t].row(a) = trans.e2.row(step.labels[static_cast<std::size_t>(a)]);
    }
  }
  for (std::size_t t = 1; t < t_len; ++t) {
    blocks[t].noalias() = e1_rows[t - 1] * e2_rows[t].transpose();
    shift[t] = blocks[t].maxCoeff();
    probs[t] = (blocks[t].array() - shift[t]).exp().matrix();
  }

  const auto scores_of = [&](std::size_t t) {
    return Vec<S>::Map(lattice.steps[t].scores.data(), static_cast<Eigen::Index>(lattice.steps[t].size()));
  };
  std::vector<Vec<S>> alpha(t_len), beta(t_len);
  alpha[0] = scores_of(0);
  for (std::size_t t = 1; t < t_len; ++t) {
    const S m = alpha[t - 1].maxCoeff();
    const Vec<S> w = (alpha[t - 1].array() - m).exp().matrix();
    const Vec<S> summed = probs[t].transpose() * w;
    alpha[t] = (summed.array().log() + (m + shift[t])).matrix() + scores_of(t);
  }
  const S log_z = log_sum_exp<S>(alpha.back());
  beta.back() = Vec<S>::Zero(static_cast<Eigen::Index>(lattice.steps.back().size()));
  for (std::size_t t = t_len - 1; t > 0; --t) {
    const Vec<S> ahead = beta[t] + scores_of(t);
    const S m = ahead.maxCoeff();
    const Vec<S> w = (ahead.array() - m).exp().matrix();
    const Vec<S> summed = probs[t] * w;
    beta[t - 1] = (summed.array().log() + (m + shift[t])).matrix();
  }

  CrfGradient<S> g;
  g.log_norm = log_z;
  g.d_emissions = EmissionMatrix<S>::Zero(emissions.rows(), emissions.cols());
  g.d_e1 = Mat<S>::Zero(trans.e1.rows(), trans.e1.cols());
  g.d_e2 = Mat<S>::Zero(trans.e2.rows(), trans.e2.cols());

  S gold_score = 0;
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto& step = lattice.steps[t];
    const auto ti = static_cast<Eigen::Index>(t);
    for (std::size_t b = 0; b < step.size(); ++b) {
      const auto bi = static_cast<Eigen::Index>(b);
      g.d_emissions(ti, step.labels[b]) = std::exp(alpha[t](bi) + beta[t](bi) - log_z);
    }
    g.d_emissions(ti, gold[t]) -= 1;
    gold_score += step.scores[static_cast<std::size_t>(gold_pos[t])];
    if (t == 0) continue;
    gold_score += blocks[t](gold_pos[t - 1], gold_pos[t]);

    // Edge marginals xi(a, b) = exp(alpha[a] + M[a][b] + s[b] + beta[b] - log Z),
    // factored as u[a] * P[a][b] * v[b].
    const auto& prev = lattice.steps[t - 1];
    const S top = alpha[t - 1].maxCoeff();
    const Vec<S> u = (alpha[t - 1].array() - top).exp().matrix();
    const Vec<S> v = ((beta[t] + scores_of(t)).array() + (top + shift[t] - log_z)).exp().matrix();
    Mat<S> xi = u.asDiagonal() * probs[t] * v.asDiagonal();
    if (!xi.allFinite()) {
      xi = blocks[t];
      xi.colwise() += alpha[t - 1];
      xi.rowwise() += (beta[t] + scores_of(t)).transpose();
      xi = (xi.array() - log_z).exp().matrix();
    }
    xi(gold_pos[t - 1], gold_pos[t]) -= 1;

    const Mat<S> d_e1_rows = xi * e2_rows[t];
    const Mat<S> d_e2_rows = xi.transpose() * e1_rows[t - 1];
    for (std::size_t a = 0; a < prev.size(); ++a) g.d_e1.row(prev.labels[a]) += d_e1_rows.row(static_cast<Eigen::Index>(a));
    for (std::size_t b = 0; b < step.size(); ++b) g.d_e2.row(step.labels[b]) += d_e2_rows.row(static_cast<Eigen::Index>(b));
  }
  g.nll = log_z - gold_score;
  return g;
}

#define NACRF_INSTANTIATE(S)                                                                                   \
  template struct LatticeStep<S>;                                                                              \
  template S transition_score<S>(const CrfTransitions<S>&, TokenId, TokenId);                                  \
  template Mat<S> transition_block<S>(const CrfTransitions<S>&, std::span<const TokenId>,                       \
                                      std::span<const TokenId>);                                               \
  template Mat<S> dense_transitions<S>(const CrfTransitions<S>&);                                              \
  template S sequence_score<S>(const EmissionMatrix<S>&, const CrfTransitions<S>&, std::span<const TokenId>);  \
  template S log_norm_exact<S>(const EmissionMatrix<S>&, const CrfTransitions<S>&);                            \
  template S log_norm_dense<S>(const EmissionMatrix<S>&, const Mat<S>&);                                       \
  template Lattice<S> build_lattice<S>(const EmissionMatrix<S>&, int, std::span<const TokenId>);               \
  template Lattice<S> build_lattice_forward<S>(const EmissionMatrix<S>&, const CrfTransitions<S>&, int,        \
                                               std::span<const TokenId>);                                      \
  template S log_norm_truncated<S>(const EmissionMatrix<S>&, const CrfTransitions<S>&, const Lattice<S>&);     \
  template Decoded<S> viterbi_exact<S>(const EmissionMatrix<S>&, const CrfTransitions<S>&);                    \
  template Decoded<S> viterbi_dense<S>(const EmissionMatrix<S>&, const CrfTransitions<S>&, const Mat<S>&);     \
  template Decoded<S> viterbi_beamed<S>(const EmissionMatrix<S>&, const CrfTransitions<S>&, const Lattice<S>&); \
  template CrfGradient<S> crf_grad<S>(const EmissionMatrix<S>&, const CrfTransitions<S>&,                      \
                                      std::span<const TokenId>, const Lattice<S>&);

NACRF_INSTANTIATE(float)
NACRF_INSTANTIATE(double)
#undef NACRF_INSTANTIATE

}  // namespace nacrf

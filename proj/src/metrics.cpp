#include "nacrf/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "nacrf/vocab.hpp"

namespace nacrf {

std::set<std::size_t> error_positions(std::span<const TokenId> src, std::span<const TokenId> ref) {
  if (src.size() != ref.size()) throw std::invalid_argument("error_positions: sequences differ in length");
  std::set<std::size_t> out;
  for (std::size_t t = 0; t < src.size(); ++t) {
    if (src[t] != ref[t]) out.insert(t);
  }
  return out;
}

IdSeq strip_content(std::span<const TokenId> ids) {
  IdSeq out;
  for (TokenId id : ids) {
    if (id == Vocab::kEos) break;
    if (id != Vocab::kPad && id != Vocab::kMask) out.push_back(id);
  }
  return out;
}

AlignedTriple align_triple(std::span<const TokenId> source, std::span<const TokenId> prediction,
                           std::span<const TokenId> reference) {
  AlignedTriple a{strip_content(source), strip_content(prediction), strip_content(reference)};
  for (IdSeq* s : {&a.source, &a.prediction, &a.reference}) s->push_back(Vocab::kEos);
  const std::size_t len = std::max({a.source.size(), a.prediction.size(), a.reference.size()});
  a.source.resize(len, Vocab::kMask);
  a.prediction.resize(len, Vocab::kPad);
  a.reference.resize(len, Vocab::kPad);
  return a;
}

namespace {

void finish(ScoreBlock& b, std::size_t flagged, std::size_t gold, std::size_t total) {
  b.precision = flagged ? static_cast<double>(b.tp) / static_cast<double>(flagged) : 0.0;
  b.recall = gold ? static_cast<double>(b.tp) / static_cast<double>(gold) : 0.0;
  b.f1 = b.precision + b.recall > 0 ? 2 * b.precision * b.recall / (b.precision + b.recall) : 0.0;
  b.accuracy = total ? static_cast<double>(b.tp + b.tn) / static_cast<double>(total) : 0.0;
}

}  // namespace

MetricsReport evaluate(const std::vector<IdSeq>& predictions, const std::vector<IdSeq>& sources,
                       const std::vector<IdSeq>& references) {
  if (predictions.size() != sources.size() || sources.size() != references.size()) {
    throw std::invalid_argument("evaluate: prediction/source/reference counts differ");
  }
  MetricsReport r;
  r.n_total = sources.size();
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto a = align_triple(sources[i], predictions[i], references[i]);
    const bool flagged = strip_content(a.prediction) != strip_content(a.source);
    const bool gold_error = strip_content(a.reference) != strip_content(a.source);
    r.n_flagged += flagged;
    r.n_gold_error += gold_error;
    if (flagged) {
      if (error_positions(a.source, a.prediction) == error_positions(a.source, a.reference)) ++r.detection.tp;
      if (strip_content(a.prediction) == strip_content(a.reference)) ++r.correction.tp;
    } else if (!gold_error) {
      ++r.detection.tn;
      ++r.correction.tn;
    }
  }
  finish(r.detection, r.n_flagged, r.n_gold_error, r.n_total);
  finish(r.correction, r.n_flagged, r.n_gold_error, r.n_total);
  return r;
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string format_table(const MetricsReport& r) {
  std::ostringstream out;
  out << "            Acc.     Prec.    Rec.     F1\n";
  for (const auto& [name, b] : {std::pair{"detection ", &r.detection}, std::pair{"correction", &r.correction}}) {
    out << name << "  " << fixed(b->accuracy) << "   " << fixed(b->precision) << "   " << fixed(b->recall)
        << "   " << fixed(b->f1) << '\n';
  }
  out << "sentences=" << r.n_total << " flagged=" << r.n_flagged << " gold_errors=" << r.n_gold_error << '\n';
  return out.str();
}

std::string format_key_values(const MetricsReport& r) {
  std::ostringstream out;
  for (const auto& [name, b] : {std::pair{"detection", &r.detection}, std::pair{"correction", &r.correction}}) {
    out << name << ".accuracy=" << fixed(b->accuracy) << '\n'
        << name << ".precision=" << fixed(b->precision) << '\n'
        << name << ".recall=" << fixed(b->recall) << '\n'
        << name << ".f1=" << fixed(b->f1) << '\n'
        << name << ".tp=" << b->tp << '\n'
        << name << ".tn=" << b->tn << '\n';
  }
  out << "n_total=" << r.n_total << '\n' << "n_flagged=" << r.n_flagged << '\n' << "n_gold_error=" << r.n_gold_error
      << '\n';
  return out.str();
}

}  // namespace nacrf

#include "nacrf/align.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "nacrf/vocab.hpp"

namespace nacrf {
namespace {

void check_raw(const IdSeq& ids, const char* which) {
  if (ids.empty() || ids.back() != Vocab::kEos) {
    throw std::invalid_argument(std::string(which) + " sequence missing trailing <eos>");
  }
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
    if (ids[i] == Vocab::kEos) {
      throw std::invalid_argument(std::string(which) + " sequence has more than one <eos>");
    }
    if (ids[i] == Vocab::kPad || ids[i] == Vocab::kMask) {
      throw std::invalid_argument(std::string(which) + " sequence contains <pad>/<mask>");
    }
  }
}

}  // namespace

PairedSample align_pair(const IdSeq& src_ids, const IdSeq& tgt_ids) {
  return align_pair_with_margin(src_ids, tgt_ids, 0);
}

PairedSample align_pair_with_margin(const IdSeq& src_ids, const IdSeq& tgt_ids, std::size_t extra) {
  check_raw(src_ids, "source");
  check_raw(tgt_ids, "target");
  PairedSample s;
  s.source_raw_len = src_ids.size();
  s.target_raw_len = tgt_ids.size();
  const std::size_t len = std::max(src_ids.size(), tgt_ids.size()) + extra;
  s.source_ids = src_ids;
  s.source_ids.resize(len, Vocab::kMask);
  s.target_ids = tgt_ids;
  s.target_ids.resize(len, Vocab::kPad);
  return s;
}

std::size_t default_mask_margin(std::size_t content_len) {
  const auto scaled = static_cast<std::size_t>(std::ceil(0.15 * static_cast<double>(content_len)));
  return std::max<std::size_t>(2, scaled);
}

IdSeq with_mask_margin(IdSeq src_ids, std::size_t margin) {
  src_ids.insert(src_ids.end(), margin, Vocab::kMask);
  return src_ids;
}

void check_paired_sample(const PairedSample& s) {
  const auto fail = [](const std::string& what) {
    throw std::logic_error("paired sample invariant violated: " + what);
  };
  if (s.source_ids.size() != s.target_ids.size()) fail("length mismatch");
  const auto check_side = [&](const IdSeq& ids, TokenId tail, TokenId forbidden, const char* which) {
    auto eos = std::find(ids.begin(), ids.end(), Vocab::kEos);
    if (eos == ids.end()) fail(std::string(which) + " has no <eos>");
    if (std::count(ids.begin(), ids.end(), Vocab::kEos) != 1) fail(std::string(which) + " has several <eos>");
    for (auto it = ids.begin(); it != eos; ++it) {
      if (*it == Vocab::kPad || *it == Vocab::kMask) fail(std::string(which) + " has filler before <eos>");
    }
    for (auto it = eos + 1; it != ids.end(); ++it) {
      if (*it != tail) fail(std::string(which) + " tail holds a non-filler token");
    }
    if (std::find(ids.begin(), ids.end(), forbidden) != ids.end()) {
      fail(std::string(which) + " holds a forbidden filler");
    }
  };
  check_side(s.source_ids, Vocab::kMask, Vocab::kPad, "source");
  check_side(s.target_ids, Vocab::kPad, Vocab::kMask, "target");
}

}  // namespace nacrf

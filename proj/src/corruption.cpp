#include "nacrf/corruption.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "nacrf/rng.hpp"
#include "nacrf/unicode.hpp"

namespace nacrf {

std::string_view op_name(EditOp op) {
  switch (op) {
    case EditOp::substitution: return "substitution";
    case EditOp::deletion: return "deletion";
    case EditOp::insertion: return "insertion";
    case EditOp::local_shuffle: return "shuffle";
  }
  return "?";
}

void CorruptionSpec::validate() const {
  for (double p : {p_deletion, p_insertion, p_shuffle}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("op probabilities must lie in [0,1]");
  }
  if (p_deletion + p_insertion + p_shuffle > 1.0 + 1e-9) {
    throw std::invalid_argument("op probabilities sum above 1");
  }
  if (shuffle_window < 2) throw std::invalid_argument("shuffle window must be >= 2");
  if (shuffle_window > max_len) throw std::invalid_argument("shuffle window exceeds max_len");
}

ConfusionSet load_confusion_set(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open confusion set: " + path);
  ConfusionSet out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing TAB");
    }
    auto key = vocab.find(unicode::nfc(line.substr(0, tab)));
    if (!key || Vocab::is_special(*key)) continue;
    auto& cands = out[*key];
    for (const auto& ch : unicode::split_scalars(unicode::nfc(line.substr(tab + 1)))) {
      auto id = vocab.find(ch);
      if (id && !Vocab::is_special(*id) && *id != *key &&
          std::find(cands.begin(), cands.end(), *id) == cands.end()) {
        cands.push_back(*id);
      }
    }
  }
  return out;
}

namespace {

bool is_palindrome(const IdSeq& ids, std::size_t start, std::size_t width) {
  for (std::size_t i = 0; i < width / 2; ++i) {
    if (ids[start + i] != ids[start + width - 1 - i]) return false;
  }
  return true;
}

std::vector<std::size_t> shuffle_starts(const IdSeq& ids, std::size_t n, std::size_t width) {
  std::vector<std::size_t> starts;
  if (n < width) return starts;
  for (std::size_t s = 0; s + width <= n; ++s) {
    if (!is_palindrome(ids, s, width)) starts.push_back(s);
  }
  return starts;
}

}  // namespace

Corruption corrupt(const IdSeq& clean_ids, const CorruptionSpec& spec, const Vocab& vocab,
                   std::uint64_t sample_index, const ConfusionSet* confusion) {
  spec.validate();
  if (clean_ids.empty() || clean_ids.back() != Vocab::kEos) {
    throw std::invalid_argument("clean sequence must end with <eos>");
  }
  const std::size_t n = clean_ids.size() - 1;
  if (n < 2) throw std::invalid_argument("clean sequence needs at least 2 content tokens");
  const auto num_content = static_cast<TokenId>(vocab.size()) - Vocab::kNumSpecial;
  const auto width = static_cast<std::size_t>(spec.shuffle_window);
  const auto starts = shuffle_starts(clean_ids, n, width);

  const auto applicable = [&](EditOp op) {
    switch (op) {
      case EditOp::substitution: return num_content >= 2;
      case EditOp::deletion: return true;
      case EditOp::insertion: return clean_ids.size() + 1 <= static_cast<std::size_t>(spec.max_len);
      case EditOp::local_shuffle: return !starts.empty();
    }
    return false;
  };
  const auto probability = [&](EditOp op) {
    switch (op) {
      case EditOp::substitution: return spec.p_substitution();
      case EditOp::deletion: return spec.p_deletion;
      case EditOp::insertion: return spec.p_insertion;
      case EditOp::local_shuffle: return spec.p_shuffle;
    }
    return 0.0;
  };
  bool any = false;
  for (EditOp op : kAllEditOps) any = any || (probability(op) > 1e-12 && applicable(op));
  if (!any) throw std::invalid_argument("no corruption op applicable to sequence");

  auto rng = derive_rng(spec.seed, sample_index);
  EditOp op;
  do {
    const double u = uniform_unit(rng);
    if (u < spec.p_deletion) {
      op = EditOp::deletion;
    } else if (u < spec.p_deletion + spec.p_insertion) {
      op = EditOp::insertion;
    } else if (u < spec.p_deletion + spec.p_insertion + spec.p_shuffle) {
      op = EditOp::local_shuffle;
    } else {
      op = EditOp::substitution;
    }
  } while (!applicable(op) || probability(op) <= 1e-12);

  const auto random_content = [&] {
    return static_cast<TokenId>(Vocab::kNumSpecial + uniform_index(rng, static_cast<std::uint64_t>(num_content)));
  };

  Corruption out;
  out.op = op;
  out.ids = clean_ids;
  switch (op) {
    case EditOp::substitution: {
      const auto pos = uniform_index(rng, n);
      const TokenId original = clean_ids[pos];
      TokenId repl = original;
      const std::vector<TokenId>* cands = nullptr;
      if (confusion) {
        auto it = confusion->find(original);
        if (it != confusion->end() && !it->second.empty()) cands = &it->second;
      }
      if (cands) {
        repl = (*cands)[uniform_index(rng, cands->size())];
      } else {
        // Draw from content ids minus the original.
        const auto r = static_cast<TokenId>(
            Vocab::kNumSpecial + uniform_index(rng, static_cast<std::uint64_t>(num_content - 1)));
        repl = (original >= Vocab::kNumSpecial && r >= original) ? r + 1 : r;
      }
      out.ids[pos] = repl;
      out.position = pos;
      out.token = original;
      break;
    }
    case EditOp::deletion: {
      const auto pos = uniform_index(rng, n);
      out.token = clean_ids[pos];
      out.ids.erase(out.ids.begin() + static_cast<std::ptrdiff_t>(pos));
      out.position = pos;
      break;
    }
    case EditOp::insertion: {
      const auto pos = uniform_index(rng, n + 1);
      const TokenId tok = random_content();
      out.ids.insert(out.ids.begin() + static_cast<std::ptrdiff_t>(pos), tok);
      out.position = pos;
      out.token = tok;
      break;
    }
    case EditOp::local_shuffle: {
      const auto start = starts[uniform_index(rng, starts.size())];
      std::reverse(out.ids.begin() + static_cast<std::ptrdiff_t>(start),
                   out.ids.begin() + static_cast<std::ptrdiff_t>(start + width));
      out.position = start;
      break;
    }
  }
  return out;
}

}  // namespace nacrf

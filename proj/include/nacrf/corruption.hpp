#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nacrf/tensor.hpp"
#include "nacrf/vocab.hpp"

namespace nacrf {

enum class EditOp { substitution, deletion, insertion, local_shuffle };

std::string_view op_name(EditOp op);
inline constexpr std::array<EditOp, 4> kAllEditOps{EditOp::substitution, EditOp::deletion,
                                                   EditOp::insertion, EditOp::local_shuffle};

struct CorruptionSpec {
  double p_deletion = 1.0 / 3.0;
  double p_insertion = 1.0 / 3.0;
  double p_shuffle = 1.0 / 3.0;  // remainder is substitution
  int shuffle_window = 3;
  std::uint64_t seed = 0;
  int max_len = 126;  // ids including `<eos>`, after corruption

  void validate() const;
  [[nodiscard]] double p_substitution() const { return 1.0 - p_deletion - p_insertion - p_shuffle; }
};

/// Optional substitution candidates per token id.
using ConfusionSet = std::unordered_map<TokenId, std::vector<TokenId>>;

/// `token<TAB>cand1cand2...` per line; tokens missing from the vocab are dropped.
ConfusionSet load_confusion_set(const std::string& path, const Vocab& vocab);

struct Corruption {
  IdSeq ids;
  EditOp op = EditOp::substitution;
  std::size_t position = 0;  // edited content index (window start for shuffles)
  TokenId token = 0;         // substituted-away or inserted token
};

/// Applies one sampled edit to `clean_ids` (content + `<eos>`). The result is
/// a pure function of (clean_ids, spec, sample_index).
Corruption corrupt(const IdSeq& clean_ids, const CorruptionSpec& spec, const Vocab& vocab,
                   std::uint64_t sample_index, const ConfusionSet* confusion = nullptr);

}  // namespace nacrf

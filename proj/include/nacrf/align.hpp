#pragma once

#include "nacrf/tensor.hpp"

namespace nacrf {

/// Source/target pair padded to a common length. The source tail is filled
/// with `<mask>` (slots the model may fill), the target tail with `<pad>`.
struct PairedSample {
  IdSeq source_ids;
  IdSeq target_ids;
  std::size_t source_raw_len = 0;  // content tokens + `<eos>`
  std::size_t target_raw_len = 0;

  [[nodiscard]] std::size_t length() const { return source_ids.size(); }
};

/// Pads the shorter side so both sequences share length max(T, T').
/// Both inputs must end in their only `<eos>` and hold no `<pad>`/`<mask>`.
PairedSample align_pair(const IdSeq& src_ids, const IdSeq& tgt_ids);

/// Like align_pair, but also appends `extra` further slots (`<mask>` on the
/// source, `<pad>` on the target) so training inputs carry the same headroom
/// the decoder appends at inference.
PairedSample align_pair_with_margin(const IdSeq& src_ids, const IdSeq& tgt_ids, std::size_t extra);

/// Default inference headroom for a source with `content_len` tokens:
/// max(2, ceil(0.15 * content_len)).
std::size_t default_mask_margin(std::size_t content_len);

/// Source ids followed by `margin` `<mask>` slots.
IdSeq with_mask_margin(IdSeq src_ids, std::size_t margin);

/// Throws if `sample` breaks any padding-protocol invariant.
void check_paired_sample(const PairedSample& sample);

}  // namespace nacrf

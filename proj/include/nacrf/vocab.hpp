#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nacrf/tensor.hpp"

namespace nacrf {

/// Bijection between token strings and ids. Ids 0..3 are always
/// `<pad>`, `<unk>`, `<eos>`, `<mask>`; content tokens follow.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kMask = 3;
  static constexpr TokenId kNumSpecial = 4;

  /// Builds from content tokens only; the specials are prepended.
  explicit Vocab(std::vector<std::string> content_tokens);

  /// Builds from a full token list whose first four entries are the specials.
  static Vocab from_full_list(const std::vector<std::string>& tokens);

  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] const std::string& token(TokenId id) const;
  [[nodiscard]] std::optional<TokenId> find(std::string_view token) const;
  /// Unknown tokens map to `<unk>`.
  [[nodiscard]] TokenId id(std::string_view token) const;
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }

  static bool is_special(TokenId id) { return id >= 0 && id < kNumSpecial; }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  Vocab() = default;
  void index();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Reserved token strings in id order.
const std::vector<std::string>& special_tokens();

/// Character vocabulary from NFC-normalized lines: every scalar seen at least
/// `min_count` times, ordered by descending count, then codepoint.
Vocab build_vocab(const std::vector<std::string>& corpus_lines, int min_count = 1);

/// One id per NFC scalar value, unknowns as `<unk>`, `<eos>` appended.
IdSeq tokenize(std::string_view text, const Vocab& vocab);

/// Inverse of tokenize: content up to the first `<eos>`, dropping `<pad>` and
/// `<mask>`. `<unk>` renders as the literal token string.
std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab);

}  // namespace nacrf

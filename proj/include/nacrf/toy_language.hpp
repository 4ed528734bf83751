#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nacrf {

struct ToyLanguageConfig {
  int alphabet_size = 56;
  int lexicon_size = 120;
  int min_word_len = 3;
  int max_word_len = 5;
  int min_words = 3;
  int max_words = 5;
  std::uint64_t seed = 7;
};

/// Synthetic "clean text" source: a fixed lexicon of CJK-character words,
/// sentences are unsegmented word sequences. A corrupted character is
/// recoverable from the rest of its word, which gives small models a
/// learnable correction task.
class ToyLanguage {
 public:
  explicit ToyLanguage(ToyLanguageConfig config);

  /// Sentence number `index`; a pure function of (seed, index).
  [[nodiscard]] std::string sentence(std::uint64_t index) const;
  [[nodiscard]] std::vector<std::string> sentences(std::uint64_t first, std::size_t count) const;

  [[nodiscard]] const std::vector<std::u32string>& lexicon() const { return lexicon_; }
  [[nodiscard]] const std::u32string& alphabet() const { return alphabet_; }

 private:
  ToyLanguageConfig config_;
  std::u32string alphabet_;
  std::vector<std::u32string> lexicon_;
};

}  // namespace nacrf

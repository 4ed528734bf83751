#include "nacrf/toy_language.hpp"

#include <set>
#include <stdexcept>

#include "nacrf/rng.hpp"
#include "nacrf/unicode.hpp"

namespace nacrf {

ToyLanguage::ToyLanguage(ToyLanguageConfig config) : config_(config) {
  if (config_.alphabet_size < 2 || config_.lexicon_size < 1 || config_.min_word_len < 1 ||
      config_.max_word_len < config_.min_word_len || config_.min_words < 1 ||
      config_.max_words < config_.min_words) {
    throw std::invalid_argument("invalid toy language config");
  }
  // Spread over the CJK Unified Ideographs block.
  for (int i = 0; i < config_.alphabet_size; ++i) {
    alphabet_.push_back(static_cast<char32_t>(0x4E00 + 37 * i));
  }
  auto rng = derive_rng(config_.seed, 0xA11CE);
  std::set<std::u32string> seen;
  const auto span = static_cast<std::uint64_t>(config_.max_word_len - config_.min_word_len + 1);
  int attempts = 0;
  while (static_cast<int>(lexicon_.size()) < config_.lexicon_size) {
    if (++attempts > 100 * config_.lexicon_size) throw std::invalid_argument("lexicon too large for alphabet");
    const auto len = static_cast<std::size_t>(config_.min_word_len) + uniform_index(rng, span);
    std::u32string word;
    for (std::size_t i = 0; i < len; ++i) word.push_back(alphabet_[uniform_index(rng, alphabet_.size())]);
    if (seen.insert(word).second) lexicon_.push_back(word);
  }
}

std::string ToyLanguage::sentence(std::uint64_t index) const {
  auto rng = derive_rng(config_.seed, index);
  const auto span = static_cast<std::uint64_t>(config_.max_words - config_.min_words + 1);
  const auto words = static_cast<std::size_t>(config_.min_words) + uniform_index(rng, span);
  std::u32string out;
  for (std::size_t i = 0; i < words; ++i) out += lexicon_[uniform_index(rng, lexicon_.size())];
  return unicode::encode(out);
}

std::vector<std::string> ToyLanguage::sentences(std::uint64_t first, std::size_t count) const {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sentence(first + i));
  return out;
}

}  // namespace nacrf

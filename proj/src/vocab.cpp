#include "nacrf/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "nacrf/unicode.hpp"

namespace nacrf {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> specials{"<pad>", "<unk>", "<eos>", "<mask>"};
  return specials;
}

Vocab::Vocab(std::vector<std::string> content_tokens) {
  tokens_ = special_tokens();
  for (auto& t : content_tokens) tokens_.push_back(std::move(t));
  index();
}

Vocab Vocab::from_full_list(const std::vector<std::string>& tokens) {
  const auto& specials = special_tokens();
  if (tokens.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), tokens.begin())) {
    throw std::invalid_argument("vocab must start with <pad>, <unk>, <eos>, <mask>");
  }
  Vocab v;
  v.tokens_ = tokens;
  v.index();
  return v;
}

void Vocab::index() {
  if (tokens_.size() <= static_cast<std::size_t>(kNumSpecial)) {
    throw std::invalid_argument("vocab needs at least one content token");
  }
  ids_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw std::invalid_argument("empty token at id " + std::to_string(i));
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("duplicate token '" + tokens_[i] + "' at id " + std::to_string(i));
    }
  }
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocab file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_full_list(tokens);
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocab file: " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocab");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::id(std::string_view token) const { return find(token).value_or(kUnk); }

Vocab build_vocab(const std::vector<std::string>& corpus_lines, int min_count) {
  if (corpus_lines.empty()) throw std::invalid_argument("empty corpus");
  std::map<char32_t, long> counts;
  for (const auto& line : corpus_lines) {
    for (char32_t c : unicode::decode(unicode::nfc(line))) ++counts[c];
  }
  std::vector<std::pair<char32_t, long>> kept;
  for (const auto& [c, n] : counts) {
    if (n >= min_count) kept.emplace_back(c, n);
  }
  if (kept.empty()) throw std::invalid_argument("no character reaches min_count");
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> content;
  content.reserve(kept.size());
  for (const auto& [c, n] : kept) content.push_back(unicode::encode(c));
  return Vocab(std::move(content));
}

IdSeq tokenize(std::string_view text, const Vocab& vocab) {
  IdSeq ids;
  for (char32_t c : unicode::decode(unicode::nfc(text))) ids.push_back(vocab.id(unicode::encode(c)));
  ids.push_back(Vocab::kEos);
  return ids;
}

std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab) {
  std::string out;
  for (TokenId id : ids) {
    if (id == Vocab::kEos) break;
    if (id == Vocab::kPad || id == Vocab::kMask) continue;
    out += vocab.token(id);
  }
  return out;
}

}  // namespace nacrf
